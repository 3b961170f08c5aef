//! Downlink max-min as a sequence of second-order-cone feasibility problems.
//!
//! With `zeta = [1, zeta_11..zeta_M1, .., zeta_1K..zeta_MK]` and
//! `zeta_mk = sqrt(eta_mk)`, the downlink SINR of user `k` equals
//! `(b_k^T zeta)^2 / ||C_k zeta||^2` where `C_k = [F_k; P_k]`. A common target
//! `t` is then the cone constraint `b_k^T zeta >= sqrt(t) ||C_k zeta||` and
//! each AP budget is `||Z_m zeta|| <= 1`.
//!
//! The feasibility test is solved with the Clarabel interior-point solver in
//! a homogenized form: the leading entry of `zeta` becomes a variable `x0`
//! which is maximized (capped at 2). Lowering `x0` only shrinks the noise
//! term, so the target is feasible exactly when the optimum has `x0 >= 1`.
//! The returned witness is re-checked through the SINR identity.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT, SupportedConeT::NonnegativeConeT,
    SupportedConeT::SecondOrderConeT,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{bisect, BisectionSpec, Feasibility, MaxMinOutcome};
use crate::chest::LmmseBank;
use crate::error::{mismatch, Error, Result};
use crate::netgen::LargeScale;
use crate::perf::DownlinkPower;
use crate::pilots::PilotBook;

/// Relative slack on the SINR constraints of a returned witness.
pub const CONE_CERT_TOL: f64 = 1e-7;

const MAX_SOLVER_ITERS: u32 = 200;

/// Cone data for one realization.
///
/// `F_k` and `P_k` are kept in factored form; dense views are available for
/// inspection on small instances.
#[derive(Clone, Debug)]
pub struct ConeProblem {
    num_aps: usize,
    num_users: usize,
    rho_d: f64,
    gamma: DMatrix<f64>,
    est_power: DMatrix<f64>,
    beta: DMatrix<f64>,
    /// `p_blocks[k][(i, m)] = sqrt(tau rho_p) beta_mk psi_k^H a_{m,i}`, zero for `i = k`.
    p_blocks: Vec<DMatrix<Complex64>>,
}

/// Assembles the cone data from the estimator bank.
pub fn build_cone_problem(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, rho_d: f64) -> Result<ConeProblem> {
    if bank.num_aps() != ls.num_aps() || bank.num_users() != ls.num_users() || pilots.num_users() != ls.num_users() {
        return Err(mismatch("bank, pilots and large-scale matrix disagree"));
    }
    if !(rho_d > 0.0) {
        return Err(Error::InvalidInput(format!("downlink power must be positive, got {rho_d}")));
    }
    let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
    let beta = ls.beta().clone();
    let s = bank.tau_rho_p().sqrt();
    let p_blocks = (0..k_users)
        .map(|k| {
            DMatrix::from_fn(k_users, m_aps, |i, m| {
                if i == k {
                    Complex64::default()
                } else {
                    bank.pilot_proj(m)[(k, i)] * (s * beta[(m, k)])
                }
            })
        })
        .collect();
    Ok(ConeProblem {
        num_aps: m_aps,
        num_users: k_users,
        rho_d,
        gamma: bank.gamma().clone(),
        est_power: bank.est_power().clone(),
        beta,
        p_blocks,
    })
}

impl ConeProblem {
    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Length of `zeta`, `MK + 1`.
    pub fn zeta_len(&self) -> usize {
        self.num_aps * self.num_users + 1
    }

    /// Shape of `C_k`: `(MK + K + 1, MK + 1)`.
    pub fn c_shape(&self) -> (usize, usize) {
        (self.zeta_len() + self.num_users, self.zeta_len())
    }

    /// Position of `zeta_mk` in `zeta`.
    pub fn index(&self, m: usize, k: usize) -> usize {
        1 + k * self.num_aps + m
    }

    pub fn b_vec(&self, k: usize) -> DVector<f64> {
        let mut b = DVector::zeros(self.zeta_len());
        for m in 0..self.num_aps {
            b[self.index(m, k)] = self.gamma[(m, k)];
        }
        b
    }

    /// Diagonal of `F_k`: `1/sqrt(rho_d)`, then `sqrt(beta_mk E|g_hat_mi|^2)`.
    pub fn f_diag(&self, k: usize) -> DVector<f64> {
        let mut f = DVector::zeros(self.zeta_len());
        f[0] = 1.0 / self.rho_d.sqrt();
        for i in 0..self.num_users {
            for m in 0..self.num_aps {
                f[self.index(m, i)] = (self.beta[(m, k)] * self.est_power[(m, i)]).sqrt();
            }
        }
        f
    }

    /// `P_k`, `K x (MK + 1)`.
    pub fn p_matrix(&self, k: usize) -> DMatrix<Complex64> {
        let mut p = DMatrix::zeros(self.num_users, self.zeta_len());
        for i in 0..self.num_users {
            for m in 0..self.num_aps {
                p[(i, self.index(m, i))] = self.p_blocks[k][(i, m)];
            }
        }
        p
    }

    /// Dense `C_k = [F_k; P_k]`.
    pub fn c_matrix(&self, k: usize) -> DMatrix<Complex64> {
        let (rows, cols) = self.c_shape();
        let mut c = DMatrix::zeros(rows, cols);
        for (j, f) in self.f_diag(k).iter().enumerate() {
            c[(j, j)] = Complex64::from(*f);
        }
        c.rows_mut(cols, self.num_users).copy_from(&self.p_matrix(k));
        c
    }

    /// `Z_m = diag(0, z_1m, .., z_Km)` with `z_km = sqrt(E|g_hat_mk|^2) e_m`.
    pub fn z_matrix(&self, m: usize) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.zeta_len(), self.zeta_len());
        for k in 0..self.num_users {
            let j = self.index(m, k);
            z[(j, j)] = self.est_power[(m, k)].sqrt();
        }
        z
    }

    /// `C_k zeta` without forming `C_k`.
    pub fn c_times(&self, k: usize, zeta: &DVector<f64>) -> DVector<Complex64> {
        let (rows, cols) = self.c_shape();
        let f = self.f_diag(k);
        let mut out = DVector::zeros(rows);
        for j in 0..cols {
            out[j] = Complex64::from(f[j] * zeta[j]);
        }
        for i in 0..self.num_users {
            out[cols + i] = (0..self.num_aps).map(|m| self.p_blocks[k][(i, m)] * zeta[self.index(m, i)]).sum();
        }
        out
    }

    /// `(b_k^T zeta)^2 / ||C_k zeta||^2` for every user.
    pub fn sinr_from_zeta(&self, zeta: &DVector<f64>) -> Vec<f64> {
        (0..self.num_users)
            .map(|k| {
                let num = self.b_vec(k).dot(zeta);
                num * num / self.c_times(k, zeta).norm_squared()
            })
            .collect()
    }

    /// `||Z_m zeta||^2` for every AP.
    pub fn ap_loads(&self, zeta: &DVector<f64>) -> Vec<f64> {
        (0..self.num_aps)
            .map(|m| (0..self.num_users).map(|k| self.est_power[(m, k)] * zeta[self.index(m, k)].powi(2)).sum())
            .collect()
    }

    pub fn zeta_from_eta(&self, eta: &DMatrix<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.zeta_len());
        z[0] = 1.0;
        for k in 0..self.num_users {
            for m in 0..self.num_aps {
                z[self.index(m, k)] = eta[(m, k)].max(0.0).sqrt();
            }
        }
        z
    }

    pub fn eta_from_zeta(&self, zeta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_aps, self.num_users, |m, k| zeta[self.index(m, k)].powi(2))
    }

    /// Scales the power part of `zeta` so the busiest AP is exactly at budget.
    fn saturate(&self, mut zeta: DVector<f64>) -> DVector<f64> {
        let peak = self.ap_loads(&zeta).into_iter().fold(0.0, f64::max);
        if peak > 0.0 {
            let s = 1.0 / peak.sqrt();
            for v in zeta.iter_mut().skip(1) {
                *v *= s;
            }
        }
        zeta[0] = 1.0;
        zeta
    }
}

/// Triplet accumulator for the constraint matrix.
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.b.len();
        for (j, v) in entries {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(rhs);
    }
}

fn solver_error(status: SolverStatus) -> Error {
    match status {
        SolverStatus::MaxIterations | SolverStatus::MaxTime => {
            Error::IterationCap { solver: "downlink cone feasibility", cap: MAX_SOLVER_ITERS as usize }
        }
        other => Error::NumericalFailure { solver: "downlink cone feasibility", detail: format!("{other:?}") },
    }
}

/// Decides whether every user can reach downlink SINR `t`. The witness is a
/// full `zeta` (leading 1) meeting every AP budget.
pub fn downlink_feasible(t: f64, cone: &ConeProblem) -> Result<Feasibility<DVector<f64>>> {
    if t <= 0.0 {
        let mut z = DVector::zeros(cone.zeta_len());
        z[0] = 1.0;
        return Ok(Feasibility::Feasible(z));
    }
    let (m_aps, k_users) = (cone.num_aps, cone.num_users);
    let n = cone.zeta_len();
    let sr = cone.rho_d.sqrt();
    let st = t.sqrt();
    // Scaled variables x_mk = sqrt(E|g_hat_mk|^2) zeta_mk.
    let unit: Vec<f64> = (0..n)
        .map(|j| if j == 0 { 1.0 } else { cone.est_power[((j - 1) % m_aps, (j - 1) / m_aps)].sqrt() })
        .collect();
    let inv = |j: usize| if unit[j] > 0.0 { 1.0 / unit[j] } else { 0.0 };

    let mut rows = Rows { i: Vec::new(), j: Vec::new(), v: Vec::new(), b: Vec::new() };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    for j in 0..n {
        rows.push_row([(j, -1.0)], 0.0);
    }
    rows.push_row([(0, 1.0)], 2.0);
    cones.push(NonnegativeConeT(n + 1));

    for k in 0..k_users {
        let start = rows.b.len();
        rows.push_row((0..m_aps).map(|m| (cone.index(m, k), -sr * cone.gamma[(m, k)] * inv(cone.index(m, k)))), 0.0);
        rows.push_row([(0, -st)], 0.0);
        for i in 0..k_users {
            for m in 0..m_aps {
                let j = cone.index(m, i);
                let coef = (cone.beta[(m, k)] * cone.est_power[(m, i)]).sqrt() * inv(j);
                rows.push_row([(j, -st * sr * coef)], 0.0);
            }
        }
        for i in (0..k_users).filter(|&i| i != k) {
            let row = cone.p_blocks[k].row(i);
            if row.iter().all(|z| *z == Complex64::default()) {
                continue;
            }
            let scaled = |m: usize, part: f64| (cone.index(m, i), -st * sr * part * inv(cone.index(m, i)));
            rows.push_row((0..m_aps).map(|m| scaled(m, row[m].re)), 0.0);
            rows.push_row((0..m_aps).map(|m| scaled(m, row[m].im)), 0.0);
        }
        cones.push(SecondOrderConeT(rows.b.len() - start));
    }

    for m in 0..m_aps {
        rows.push_row([], 1.0);
        for k in 0..k_users {
            rows.push_row([(cone.index(m, k), -1.0)], 0.0);
        }
        cones.push(SecondOrderConeT(k_users + 1));
    }

    let n_rows = rows.b.len();
    let a = CscMatrix::new_from_triplets(n_rows, n, rows.i, rows.j, rows.v);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    q[0] = -1.0;
    let settings = DefaultSettings { verbose: false, max_iter: MAX_SOLVER_ITERS, ..DefaultSettings::default() };
    let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings)
        .map_err(|e| Error::NumericalFailure { solver: "downlink cone feasibility", detail: format!("{e:?}") })?;
    solver.solve();
    let status = solver.solution.status;
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        other => return Err(solver_error(other)),
    }

    let x = &solver.solution.x;
    if x[0] < 1.0 - CONE_CERT_TOL {
        return Ok(Feasibility::Infeasible);
    }
    let mut zeta = DVector::from_fn(n, |j, _| x[j].max(0.0) * inv(j));
    zeta[0] = 1.0;
    let peak = cone.ap_loads(&zeta).into_iter().fold(0.0, f64::max);
    if peak > 1.0 {
        let s = 1.0 / peak.sqrt();
        for v in zeta.iter_mut().skip(1) {
            *v *= s;
        }
    }
    let ok = cone.sinr_from_zeta(&zeta).iter().all(|s| *s >= t * (1.0 - CONE_CERT_TOL));
    Ok(if ok { Feasibility::Feasible(zeta) } else { Feasibility::Infeasible })
}

/// Downlink max-min by bisection on [`downlink_feasible`].
pub fn downlink_maxmin(cone: &ConeProblem, spec: &BisectionSpec) -> Result<MaxMinOutcome<DownlinkPower>> {
    let full = DownlinkPower::with_budget(
        DMatrix::from_fn(cone.num_aps, cone.num_users, |m, _| {
            let s: f64 = cone.est_power.row(m).sum();
            if s > 0.0 {
                1.0 / s
            } else {
                0.0
            }
        }),
        &cone.est_power,
    )?;
    let zeta_full = cone.zeta_from_eta(full.matrix());
    let sinr_full = cone.sinr_from_zeta(&zeta_full);
    let out = bisect(
        spec,
        (zeta_full, sinr_full),
        |t| downlink_feasible(t, cone),
        |z: DVector<f64>| {
            let z = cone.saturate(z);
            let s = cone.sinr_from_zeta(&z);
            Ok((z, s))
        },
    )?;
    let eta = cone.eta_from_zeta(&out.power);
    // Saturation can overshoot the budget by rounding only.
    let eta = {
        let power = DownlinkPower::with_budget(eta.clone(), &cone.est_power);
        match power {
            Ok(p) => p,
            Err(_) => DownlinkPower::with_budget(eta * (1.0 - 1e-12), &cone.est_power)?,
        }
    };
    Ok(MaxMinOutcome {
        power: eta,
        t_star: out.t_star,
        sinr: out.sinr,
        t_lo: out.t_lo,
        t_hi: out.t_hi,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chest::build_lmmse_bank;
    use crate::perf::downlink_sinr_all;
    use crate::pilots::{orthonormal_pilot_book, random_pilot_book};
    use crate::testutil::{random_beta, random_downlink_eta};

    fn instance(m: usize, k: usize, tau: usize, seed: u64) -> (LargeScale, PilotBook, LmmseBank) {
        let ls = LargeScale::from_beta(random_beta(m, k, seed)).unwrap();
        let pilots = random_pilot_book(tau, k, seed + 1).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 4.0).unwrap();
        (ls, pilots, bank)
    }

    #[test]
    fn shapes_and_structure() {
        let (ls, pilots, bank) = instance(3, 4, 2, 1);
        let cone = build_cone_problem(&ls, &pilots, &bank, 5.0).unwrap();
        assert_eq!(cone.c_shape(), (3 * 4 + 4 + 1, 3 * 4 + 1));
        for k in 0..4 {
            let c = cone.c_matrix(k);
            assert_eq!(c.shape(), cone.c_shape());
            let p = cone.p_matrix(k);
            assert!(p.row(k).iter().all(|z| z.norm() == 0.0));
            for i in 0..4 {
                for j in 0..cone.zeta_len() {
                    let inside = j >= 1 + i * 3 && j < 1 + (i + 1) * 3;
                    if !inside {
                        assert_eq!(p[(i, j)], Complex64::default());
                    }
                }
            }
            let b = cone.b_vec(k);
            for j in 0..cone.zeta_len() {
                let inside = j >= 1 + k * 3 && j < 1 + (k + 1) * 3;
                assert_eq!(b[j] != 0.0, inside);
            }
        }
    }

    #[test]
    fn dense_and_factored_products_agree() {
        let (ls, pilots, bank) = instance(3, 3, 2, 4);
        let cone = build_cone_problem(&ls, &pilots, &bank, 2.0).unwrap();
        let zeta = cone.zeta_from_eta(&random_downlink_eta(&bank, 4));
        for k in 0..3 {
            let dense = cone.c_matrix(k) * zeta.map(Complex64::from);
            assert!((dense - cone.c_times(k, &zeta)).norm() < 1e-12);
        }
        let z = cone.z_matrix(1);
        let load = (&z * &zeta).norm_squared();
        assert!((load - cone.ap_loads(&zeta)[1]).abs() < 1e-12);
    }

    #[test]
    fn identity_with_closed_form_sinr() {
        for seed in 0..20 {
            let (ls, pilots, bank) = instance(4, 3, 2, seed);
            let cone = build_cone_problem(&ls, &pilots, &bank, 7.0).unwrap();
            let eta = random_downlink_eta(&bank, seed + 3);
            let a = cone.sinr_from_zeta(&cone.zeta_from_eta(&eta));
            let b = downlink_sinr_all(&ls, &pilots, &bank, 7.0, &DownlinkPower::new(eta, &bank).unwrap()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x / y - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_target_feasible() {
        let (ls, pilots, bank) = instance(2, 2, 1, 0);
        let cone = build_cone_problem(&ls, &pilots, &bank, 1.0).unwrap();
        assert!(downlink_feasible(0.0, &cone).unwrap().is_feasible());
    }

    #[test]
    fn single_ap_single_user_threshold() {
        // Only one user: best is the full budget, eta = 1/gamma, giving
        // SINR = rho gamma / (1 + rho beta).
        let ls = LargeScale::from_beta(DMatrix::from_element(1, 1, 0.8)).unwrap();
        let pilots = orthonormal_pilot_book(1, 1, 0).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 3.0).unwrap();
        let rho = 6.0;
        let g = bank.gamma()[(0, 0)];
        let want = rho * g / (1.0 + rho * 0.8);
        let cone = build_cone_problem(&ls, &pilots, &bank, rho).unwrap();
        let out = downlink_maxmin(&cone, &BisectionSpec::default()).unwrap();
        assert!((out.t_star / want - 1.0).abs() < 1e-4);
        assert!(downlink_feasible(want * (1.0 - 1e-4), &cone).unwrap().is_feasible());
        assert!(!downlink_feasible(want * (1.0 + 1e-4), &cone).unwrap().is_feasible());
    }

    #[test]
    fn symmetric_two_ap_single_user() {
        // Both APs spend their full budget, eta_m = 1/gamma, so
        // SINR = rho (2 sqrt(gamma))^2 / (1 + 2 rho beta).
        let ls = LargeScale::from_beta(DMatrix::from_element(2, 1, 0.5)).unwrap();
        let pilots = orthonormal_pilot_book(1, 1, 0).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 2.0).unwrap();
        let rho = 4.0;
        let g = bank.gamma()[(0, 0)];
        let want = rho * 4.0 * g / (1.0 + 2.0 * rho * 0.5);
        let cone = build_cone_problem(&ls, &pilots, &bank, rho).unwrap();
        let out = downlink_maxmin(&cone, &BisectionSpec::default()).unwrap();
        assert!((out.t_star / want - 1.0).abs() < 1e-3);
    }

    #[test]
    fn maxmin_certificate() {
        for seed in 0..3 {
            let (ls, pilots, bank) = instance(5, 3, 2, seed);
            let cone = build_cone_problem(&ls, &pilots, &bank, 5.0).unwrap();
            let out = downlink_maxmin(&cone, &BisectionSpec::default()).unwrap();
            let t = out.t_star;
            assert!(downlink_feasible(t * (1.0 - 1e-3), &cone).unwrap().is_feasible());
            assert!(!downlink_feasible(t * (1.0 + 1e-3), &cone).unwrap().is_feasible());
            let max = out.sinr.iter().copied().fold(0.0, f64::max);
            assert!(max - t <= 1e-3 * t);
            let loads = out.power.ap_loads(&bank);
            assert!(loads.iter().copied().fold(0.0, f64::max) >= 1.0 - 1e-5);
            assert!(loads.iter().all(|l| *l <= 1.0 + 1e-7));
            let s = downlink_sinr_all(&ls, &pilots, &bank, 5.0, &out.power).unwrap();
            for (a, b) in s.iter().zip(&out.sinr) {
                assert!((a / b - 1.0).abs() < 1e-8);
            }
        }
    }
}
