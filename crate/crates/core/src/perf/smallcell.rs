//! Small-cell baseline: each user is served by one dedicated AP and both ends
//! estimate their effective channel from pilots.

use nalgebra::{DMatrix, DVector};

use super::linear::LinearSinrModel;
use crate::error::{invalid, mismatch, Result};
use crate::netgen::LargeScale;
use crate::pilots::PilotBook;
use crate::special::smallcell_rate_bits;

/// Serving AP `m_k` of each user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmallCellAssignment {
    serving: Vec<usize>,
}

impl SmallCellAssignment {
    /// Validates an explicit assignment: indices in range, no AP reused.
    pub fn new(serving: Vec<usize>, num_aps: usize) -> Result<Self> {
        let mut used = vec![false; num_aps];
        for (k, &m) in serving.iter().enumerate() {
            if m >= num_aps {
                return Err(invalid(format!("user {k} assigned to AP {m}, only {num_aps} exist")));
            }
            if std::mem::replace(&mut used[m], true) {
                return Err(invalid(format!("AP {m} assigned to more than one user")));
            }
        }
        Ok(Self { serving })
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn ap_of(&self, k: usize) -> usize {
        self.serving[k]
    }
}

/// Greedy exclusive assignment: users in descending order of their strongest
/// `beta_mk` each take their strongest AP that is still free.
pub fn assign_serving_aps(ls: &LargeScale) -> Result<SmallCellAssignment> {
    let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
    if m_aps < k_users {
        return Err(invalid(format!("small cells need M >= K (M={m_aps}, K={k_users})")));
    }
    let beta = ls.beta();
    let best = |k: usize| beta.column(k).max();
    let mut order: Vec<usize> = (0..k_users).collect();
    order.sort_by(|&a, &b| best(b).total_cmp(&best(a)).then(a.cmp(&b)));
    let mut taken = vec![false; m_aps];
    let mut serving = vec![0; k_users];
    for k in order {
        let m = (0..m_aps)
            .filter(|&m| !taken[m])
            .max_by(|&a, &b| beta[(a, k)].total_cmp(&beta[(b, k)]).then(b.cmp(&a)))
            .expect("M >= K leaves a free AP");
        taken[m] = true;
        serving[k] = m;
    }
    Ok(SmallCellAssignment { serving })
}

fn check(ls: &LargeScale, pilots: &PilotBook, assignment: &SmallCellAssignment) -> Result<()> {
    if pilots.num_users() != ls.num_users() || assignment.serving.len() != ls.num_users() {
        return Err(mismatch("pilots, assignment and large-scale matrix disagree"));
    }
    if assignment.serving.iter().any(|&m| m >= ls.num_aps()) {
        return Err(invalid("assignment refers to a missing AP"));
    }
    Ok(())
}

/// Uplink effective SNR `omega_k` as a linear-fractional map of `eta_sc`.
///
/// The estimate quality is
/// `omega_bar_k = rho_up tau_u beta_{m_k k}^2 / (rho_up tau_u sum_k' beta_{m_k k'} |psi_k^H psi_k'|^2 + 1)`.
pub fn smallcell_uplink_model(
    ls: &LargeScale,
    pilots: &PilotBook,
    assignment: &SmallCellAssignment,
    rho_u: f64,
    rho_up: f64,
    tau_u: f64,
) -> Result<LinearSinrModel> {
    check(ls, pilots, assignment)?;
    let beta = ls.beta();
    let corr = pilots.correlation_sq();
    let k_users = ls.num_users();
    let e = rho_up * tau_u;
    let mut model = LinearSinrModel {
        signal: DVector::zeros(k_users),
        noise: DVector::from_element(k_users, 1.0),
        self_interference: DVector::zeros(k_users),
        cross: DMatrix::zeros(k_users, k_users),
    };
    for k in 0..k_users {
        let m = assignment.ap_of(k);
        let b = beta[(m, k)];
        let contamination: f64 = (0..k_users).map(|j| beta[(m, j)] * corr[(k, j)]).sum();
        let omega_bar = e * b * b / (e * contamination + 1.0);
        model.signal[k] = rho_u * omega_bar;
        model.self_interference[k] = rho_u * (b - omega_bar);
        for j in (0..k_users).filter(|&j| j != k) {
            model.cross[(k, j)] = rho_u * beta[(m, j)];
        }
    }
    Ok(model)
}

/// Downlink effective SNR `mu_k` as a linear-fractional map of `alpha_sc`.
/// Interference at user `k` comes from the APs `m_k'` serving the others.
pub fn smallcell_downlink_model(
    ls: &LargeScale,
    pilots: &PilotBook,
    assignment: &SmallCellAssignment,
    rho_d: f64,
    rho_dp: f64,
    tau_d: f64,
) -> Result<LinearSinrModel> {
    check(ls, pilots, assignment)?;
    let beta = ls.beta();
    let corr = pilots.correlation_sq();
    let k_users = ls.num_users();
    let e = rho_dp * tau_d;
    let mut model = LinearSinrModel {
        signal: DVector::zeros(k_users),
        noise: DVector::from_element(k_users, 1.0),
        self_interference: DVector::zeros(k_users),
        cross: DMatrix::zeros(k_users, k_users),
    };
    for k in 0..k_users {
        let b = beta[(assignment.ap_of(k), k)];
        let contamination: f64 = (0..k_users).map(|j| beta[(assignment.ap_of(j), k)] * corr[(k, j)]).sum();
        let mu_bar = e * b * b / (e * contamination + 1.0);
        model.signal[k] = rho_d * mu_bar;
        model.self_interference[k] = rho_d * (b - mu_bar);
        for j in (0..k_users).filter(|&j| j != k) {
            model.cross[(k, j)] = rho_d * beta[(assignment.ap_of(j), k)];
        }
    }
    Ok(model)
}

fn rates(model: &LinearSinrModel, power: &[f64]) -> Result<Vec<f64>> {
    if power.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("small-cell power coefficients must lie in [0, 1]"));
    }
    let omega = model.sinr(power)?;
    let r: Vec<f64> = omega.iter().map(|&w| smallcell_rate_bits(w)).collect();
    if r.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::Error::NonFinite("small-cell rate"));
    }
    Ok(r)
}

/// Per-user small-cell uplink rate in bits/s/Hz.
pub fn smallcell_uplink_rate(
    ls: &LargeScale,
    pilots: &PilotBook,
    assignment: &SmallCellAssignment,
    rho_u: f64,
    rho_up: f64,
    tau_u: f64,
    eta_sc: &[f64],
) -> Result<Vec<f64>> {
    rates(&smallcell_uplink_model(ls, pilots, assignment, rho_u, rho_up, tau_u)?, eta_sc)
}

/// Per-user small-cell downlink rate in bits/s/Hz.
pub fn smallcell_downlink_rate(
    ls: &LargeScale,
    pilots: &PilotBook,
    assignment: &SmallCellAssignment,
    rho_d: f64,
    rho_dp: f64,
    tau_d: f64,
    alpha_sc: &[f64],
) -> Result<Vec<f64>> {
    rates(&smallcell_downlink_model(ls, pilots, assignment, rho_d, rho_dp, tau_d)?, alpha_sc)
}
