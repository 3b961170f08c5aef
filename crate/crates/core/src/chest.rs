//! Per-AP linear channel estimators and sampled channel realizations.
//!
//! Every AP `m` estimates its channel vector as `g_hat_m = A_m^H y_m`, where
//! `y_m = sqrt(tau rho_p) Psi g_m + w_m` is its received pilot signal. The
//! LMMSE operator is
//!
//! ```text
//! A_m = sqrt(tau rho_p) (tau rho_p Psi B_m Psi^H + I)^-1 Psi B_m
//! ```
//!
//! and the estimate variance is `gamma_mk = sqrt(tau rho_p) beta_mk psi_k^H a_mk`.
//!
//! A bank also records, for any linear estimator, the two second-order
//! statistics the SINR expressions need: the coherent gain
//! `E[g_hat^* g] = sqrt(tau rho_p) beta psi_k^H a_mk` (stored as `gamma`) and
//! the estimate power `E|g_hat|^2 = a^H (tau rho_p Psi B Psi^H + I) a`. They
//! coincide for LMMSE; the suboptimal scalar estimator keeps them apart.

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::netgen::LargeScale;
use crate::pilots::{CMatrix, PilotBook};
use crate::rng::complex_normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Full LMMSE over the pilot observation.
    Lmmse,
    /// Pilot projection `psi_k^H y_m` scaled as if pilots were orthonormal.
    Suboptimal,
}

/// Estimation operators and their statistics for one realization.
#[derive(Clone, Debug)]
pub struct LmmseBank {
    estimator: Estimator,
    rho_p: f64,
    tau: usize,
    a_ops: Vec<CMatrix>,
    gamma: DMatrix<f64>,
    est_power: DMatrix<f64>,
    pilot_proj: Vec<CMatrix>,
    a_norm_sq: DMatrix<f64>,
}

impl LmmseBank {
    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn rho_p(&self) -> f64 {
        self.rho_p
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn tau_rho_p(&self) -> f64 {
        self.tau as f64 * self.rho_p
    }

    pub fn num_aps(&self) -> usize {
        self.a_ops.len()
    }

    pub fn num_users(&self) -> usize {
        self.gamma.ncols()
    }

    /// `A_m`, `tau x K`; column `k` is `a_{m,k}`.
    pub fn a_op(&self, m: usize) -> &CMatrix {
        &self.a_ops[m]
    }

    pub fn a_ops(&self) -> &[CMatrix] {
        &self.a_ops
    }

    /// `gamma_mk = sqrt(tau rho_p) beta_mk Re(psi_k^H a_mk)`.
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `E|g_hat_mk|^2`; equals `gamma` for the LMMSE estimator.
    pub fn est_power(&self) -> &DMatrix<f64> {
        &self.est_power
    }

    /// `Psi^H A_m`, `K x K`; entry `(j, k)` is `psi_j^H a_{m,k}`.
    pub fn pilot_proj(&self, m: usize) -> &CMatrix {
        &self.pilot_proj[m]
    }

    /// `||a_{m,k}||^2`.
    pub fn a_norm_sq(&self) -> &DMatrix<f64> {
        &self.a_norm_sq
    }

    fn from_ops(
        estimator: Estimator,
        ls: &LargeScale,
        pilots: &PilotBook,
        rho_p: f64,
        a_ops: Vec<CMatrix>,
    ) -> Result<Self> {
        let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
        let tau = pilots.tau();
        let tau_rho = tau as f64 * rho_p;
        let sqrt_tau_rho = tau_rho.sqrt();
        let beta = ls.beta();
        let psi_h = pilots.psi().adjoint();

        let pilot_proj: Vec<CMatrix> = a_ops.par_iter().map(|a| &psi_h * a).collect();
        let mut gamma = DMatrix::zeros(m_aps, k_users);
        let mut est_power = DMatrix::zeros(m_aps, k_users);
        let mut a_norm_sq = DMatrix::zeros(m_aps, k_users);
        for m in 0..m_aps {
            let q = &pilot_proj[m];
            for k in 0..k_users {
                let norm_sq = a_ops[m].column(k).norm_squared();
                let gain = sqrt_tau_rho * beta[(m, k)] * q[(k, k)];
                if gain.im.abs() > 1e-9 * gain.re.abs() + 1e-300 {
                    return Err(Error::NumericalFailure {
                        solver: "estimator bank",
                        detail: format!("gamma[{m},{k}] has imaginary part {:e}", gain.im),
                    });
                }
                let leak: f64 = (0..k_users).map(|j| beta[(m, j)] * q[(j, k)].norm_sqr()).sum();
                gamma[(m, k)] = gain.re;
                est_power[(m, k)] = norm_sq + tau_rho * leak;
                a_norm_sq[(m, k)] = norm_sq;
            }
        }
        if gamma.iter().chain(est_power.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("estimator bank"));
        }
        Ok(Self { estimator, rho_p, tau, a_ops, gamma, est_power, pilot_proj, a_norm_sq })
    }
}

fn check_inputs(ls: &LargeScale, pilots: &PilotBook, rho_p: f64) -> Result<()> {
    if pilots.num_users() != ls.num_users() {
        return Err(mismatch(format!(
            "pilot book has {} users, large-scale matrix {}",
            pilots.num_users(),
            ls.num_users()
        )));
    }
    if !(rho_p > 0.0 && rho_p.is_finite()) {
        return Err(invalid(format!("pilot power must be positive, got {rho_p}")));
    }
    if ls.beta().iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("large-scale fading"));
    }
    Ok(())
}

/// LMMSE operator of one AP via a Cholesky solve of the `tau x tau` system.
fn lmmse_operator(psi: &CMatrix, beta_row: &[f64], tau_rho: f64) -> Result<CMatrix> {
    let tau = psi.nrows();
    // Psi B_m
    let mut psi_b = psi.clone();
    for (k, mut col) in psi_b.column_iter_mut().enumerate() {
        col *= Complex64::from(beta_row[k]);
    }
    let mut r = psi_b.clone() * psi.adjoint();
    r *= Complex64::from(tau_rho);
    for i in 0..tau {
        r[(i, i)] += Complex64::from(1.0);
    }
    // Enforce exact Hermitian symmetry before factorizing.
    let r = (&r + r.adjoint()) * Complex64::from(0.5);
    let chol = Cholesky::new(r).ok_or_else(|| Error::NumericalFailure {
        solver: "LMMSE bank",
        detail: "pilot covariance is not positive definite".into(),
    })?;
    let mut a = chol.solve(&psi_b);
    a *= Complex64::from(tau_rho.sqrt());
    Ok(a)
}

/// Builds the LMMSE estimator bank.
pub fn build_lmmse_bank(ls: &LargeScale, pilots: &PilotBook, rho_p: f64) -> Result<LmmseBank> {
    check_inputs(ls, pilots, rho_p)?;
    let tau_rho = pilots.tau() as f64 * rho_p;
    let beta = ls.beta();
    let a_ops = (0..ls.num_aps())
        .into_par_iter()
        .map(|m| {
            let row: Vec<f64> = beta.row(m).iter().copied().collect();
            lmmse_operator(pilots.psi(), &row, tau_rho)
        })
        .collect::<Result<Vec<_>>>()?;
    LmmseBank::from_ops(Estimator::Lmmse, ls, pilots, rho_p, a_ops)
}

/// Builds the baseline scalar estimator
/// `g_hat_mk = sqrt(tau rho_p) beta_mk / (tau rho_p beta_mk + 1) psi_k^H y_m`.
///
/// It ignores pilot overlap; under orthonormal pilots it is the LMMSE
/// estimator.
pub fn build_suboptimal_bank(ls: &LargeScale, pilots: &PilotBook, rho_p: f64) -> Result<LmmseBank> {
    check_inputs(ls, pilots, rho_p)?;
    let tau_rho = pilots.tau() as f64 * rho_p;
    let beta = ls.beta();
    let psi = pilots.psi();
    let a_ops = (0..ls.num_aps())
        .map(|m| {
            let mut a = psi.clone();
            for (k, mut col) in a.column_iter_mut().enumerate() {
                let b = beta[(m, k)];
                col *= Complex64::from(tau_rho.sqrt() * b / (tau_rho * b + 1.0));
            }
            a
        })
        .collect();
    LmmseBank::from_ops(Estimator::Suboptimal, ls, pilots, rho_p, a_ops)
}

pub fn build_bank(estimator: Estimator, ls: &LargeScale, pilots: &PilotBook, rho_p: f64) -> Result<LmmseBank> {
    match estimator {
        Estimator::Lmmse => build_lmmse_bank(ls, pilots, rho_p),
        Estimator::Suboptimal => build_suboptimal_bank(ls, pilots, rho_p),
    }
}

/// One channel realization together with the pilot observation and the
/// resulting estimates.
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    /// `M x K`, `g_mk = sqrt(beta_mk) h_mk`.
    pub g: CMatrix,
    /// `tau x M`, column `m` is `y_m`.
    pub y_pilot: CMatrix,
    pub g_hat: CMatrix,
    /// `g - g_hat`.
    pub g_tilde: CMatrix,
}

/// Reusable sampler of channel realizations. Buffers are caller-owned so the
/// Monte Carlo loops do not allocate.
pub(crate) struct ChannelSampler<'a> {
    sqrt_beta: DMatrix<f64>,
    psi: &'a CMatrix,
    bank: &'a LmmseBank,
    sqrt_tau_rho: f64,
}

/// Output buffers of [`ChannelSampler::draw`], all column-major.
pub(crate) struct ChannelBuffers {
    /// `M x K`
    pub g: Vec<Complex64>,
    /// `tau x M`
    pub y: Vec<Complex64>,
    /// `M x K`
    pub g_hat: Vec<Complex64>,
}

impl<'a> ChannelSampler<'a> {
    pub fn new(ls: &LargeScale, pilots: &'a PilotBook, bank: &'a LmmseBank) -> Result<Self> {
        if pilots.num_users() != ls.num_users()
            || bank.num_users() != ls.num_users()
            || bank.num_aps() != ls.num_aps()
            || bank.tau() != pilots.tau()
        {
            return Err(mismatch("large-scale matrix, pilot book and bank disagree"));
        }
        Ok(Self {
            sqrt_beta: ls.beta().map(f64::sqrt),
            psi: pilots.psi(),
            bank,
            sqrt_tau_rho: bank.tau_rho_p().sqrt(),
        })
    }

    pub fn buffers(&self) -> ChannelBuffers {
        let (m, k, tau) = (self.sqrt_beta.nrows(), self.sqrt_beta.ncols(), self.psi.nrows());
        ChannelBuffers {
            g: vec![Complex64::default(); m * k],
            y: vec![Complex64::default(); tau * m],
            g_hat: vec![Complex64::default(); m * k],
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut ChannelBuffers) {
        let (m_aps, k_users, tau) = (self.sqrt_beta.nrows(), self.sqrt_beta.ncols(), self.psi.nrows());
        for (g, sb) in buf.g.iter_mut().zip(self.sqrt_beta.iter()) {
            *g = complex_normal(rng) * *sb;
        }
        let psi = self.psi.as_slice();
        for m in 0..m_aps {
            let y = &mut buf.y[m * tau..(m + 1) * tau];
            for v in y.iter_mut() {
                *v = complex_normal(rng);
            }
            for k in 0..k_users {
                let coef = buf.g[k * m_aps + m] * self.sqrt_tau_rho;
                let col = &psi[k * tau..(k + 1) * tau];
                for (v, p) in y.iter_mut().zip(col) {
                    *v += p * coef;
                }
            }
            let a = self.bank.a_ops[m].as_slice();
            for k in 0..k_users {
                let col = &a[k * tau..(k + 1) * tau];
                let est: Complex64 = col.iter().zip(y.iter()).map(|(a, y)| a.conj() * y).sum();
                buf.g_hat[k * m_aps + m] = est;
            }
        }
    }
}

/// Samples one realization of channels, pilot observation and estimates.
pub fn draw_channel<R: Rng + ?Sized>(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rng: &mut R,
) -> Result<ChannelDraw> {
    let sampler = ChannelSampler::new(ls, pilots, bank)?;
    let mut buf = sampler.buffers();
    sampler.draw(rng, &mut buf);
    let (m, k, tau) = (ls.num_aps(), ls.num_users(), pilots.tau());
    let g = CMatrix::from_vec(m, k, buf.g);
    let g_hat = CMatrix::from_vec(m, k, buf.g_hat);
    let g_tilde = &g - &g_hat;
    Ok(ChannelDraw { g, y_pilot: CMatrix::from_vec(tau, m, buf.y), g_hat, g_tilde })
}
