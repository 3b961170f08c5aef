//! Cell-free downlink SINR with conjugate beamforming from estimated channels.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::chest::LmmseBank;
use crate::error::{invalid, mismatch, Result};
use crate::netgen::LargeScale;
use crate::pilots::PilotBook;

/// Per-AP budget slack accepted by [`DownlinkPower::new`].
pub const AP_BUDGET_TOL: f64 = 1e-9;

/// Downlink power coefficients `eta_mk >= 0` with
/// `sum_k eta_mk E|g_hat_mk|^2 <= 1` at every AP.
#[derive(Clone, Debug, PartialEq)]
pub struct DownlinkPower(DMatrix<f64>);

impl DownlinkPower {
    pub fn new(eta: DMatrix<f64>, bank: &LmmseBank) -> Result<Self> {
        Self::with_budget(eta, bank.est_power())
    }

    /// Same as [`DownlinkPower::new`] given the estimate powers directly.
    pub fn with_budget(eta: DMatrix<f64>, est_power: &DMatrix<f64>) -> Result<Self> {
        if eta.shape() != est_power.shape() {
            return Err(mismatch(format!("eta is {:?}, estimates are {:?}", eta.shape(), est_power.shape())));
        }
        if eta.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("downlink eta must be finite and nonnegative"));
        }
        let p = Self(eta);
        for (m, load) in p.loads(est_power).into_iter().enumerate() {
            if load > 1.0 + AP_BUDGET_TOL {
                return Err(invalid(format!("AP {m} power budget exceeded: {load}")));
            }
        }
        Ok(p)
    }

    /// Every AP at full power, split evenly in coefficient across users:
    /// `eta_mk = 1 / sum_k E|g_hat_mk|^2`.
    pub fn full(bank: &LmmseBank) -> Self {
        let p = bank.est_power();
        let mut eta = DMatrix::zeros(p.nrows(), p.ncols());
        for m in 0..p.nrows() {
            let s: f64 = p.row(m).sum();
            if s > 0.0 {
                eta.row_mut(m).fill(1.0 / s);
            }
        }
        Self(eta)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `sum_k eta_mk E|g_hat_mk|^2` per AP.
    pub fn ap_loads(&self, bank: &LmmseBank) -> Vec<f64> {
        self.loads(bank.est_power())
    }

    fn loads(&self, p: &DMatrix<f64>) -> Vec<f64> {
        (0..p.nrows()).map(|m| (0..p.ncols()).map(|k| self.0[(m, k)] * p[(m, k)]).sum()).collect()
    }
}

fn check(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, eta: &DownlinkPower) -> Result<()> {
    if bank.num_aps() != ls.num_aps() || bank.num_users() != ls.num_users() || pilots.num_users() != ls.num_users() {
        return Err(mismatch("bank, pilots and large-scale matrix disagree"));
    }
    if eta.0.shape() != ls.beta().shape() {
        return Err(mismatch("downlink power matrix shape"));
    }
    Ok(())
}

fn sinr_one(ls: &LargeScale, bank: &LmmseBank, rho_d: f64, eta: &DMatrix<f64>, k: usize) -> f64 {
    let beta = ls.beta();
    let (gamma, power) = (bank.gamma(), bank.est_power());
    let m_aps = ls.num_aps();
    let tau_rho = bank.tau_rho_p();
    let coherent: f64 = (0..m_aps).map(|m| eta[(m, k)].sqrt() * gamma[(m, k)]).sum();
    let mut den = 1.0;
    for m in 0..m_aps {
        den += rho_d * eta[(m, k)] * power[(m, k)] * beta[(m, k)];
    }
    for i in (0..ls.num_users()).filter(|&i| i != k) {
        let mut spread = 0.0;
        let mut leak = Complex64::default();
        for m in 0..m_aps {
            spread += eta[(m, i)] * beta[(m, k)] * power[(m, i)];
            leak += bank.pilot_proj(m)[(k, i)] * (eta[(m, i)].sqrt() * beta[(m, k)]);
        }
        den += rho_d * (spread + tau_rho * leak.norm_sqr());
    }
    rho_d * coherent * coherent / den
}

/// Closed-form downlink SINR of user `k`.
pub fn downlink_sinr_cf(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_d: f64,
    eta: &DownlinkPower,
    k: usize,
) -> Result<f64> {
    check(ls, pilots, bank, eta)?;
    if k >= ls.num_users() {
        return Err(mismatch(format!("user {k} out of range")));
    }
    Ok(sinr_one(ls, bank, rho_d, &eta.0, k))
}

pub fn downlink_sinr_all(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_d: f64,
    eta: &DownlinkPower,
) -> Result<Vec<f64>> {
    check(ls, pilots, bank, eta)?;
    Ok((0..ls.num_users()).map(|k| sinr_one(ls, bank, rho_d, &eta.0, k)).collect())
}

/// Downlink SINR under orthonormal pilots:
/// `rho_d (sum_m sqrt(eta_mk) gamma_mk)^2 / (1 + rho_d sum_i sum_m eta_mi gamma_mi beta_mk)`.
pub fn downlink_sinr_orthonormal(ls: &LargeScale, gamma: &DMatrix<f64>, rho_d: f64, eta: &DMatrix<f64>, k: usize) -> f64 {
    let beta = ls.beta();
    let coherent: f64 = (0..ls.num_aps()).map(|m| eta[(m, k)].sqrt() * gamma[(m, k)]).sum();
    let mut load = 0.0;
    for i in 0..ls.num_users() {
        for m in 0..ls.num_aps() {
            load += eta[(m, i)] * gamma[(m, i)] * beta[(m, k)];
        }
    }
    rho_d * coherent * coherent / (1.0 + rho_d * load)
}

/// Downlink SINR with collocated antennas under a total power split
/// `eta_mk = eta_k / (M gamma_k)`:
/// `rho_d M gamma_k eta_k / (1 + rho_d beta_k sum_i eta_i)`.
pub fn downlink_sinr_collocated(num_aps: usize, gamma_k: f64, beta_k: f64, rho_d: f64, eta: &[f64], k: usize) -> f64 {
    let total: f64 = eta.iter().sum();
    rho_d * num_aps as f64 * gamma_k * eta[k] / (1.0 + rho_d * beta_k * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chest::build_lmmse_bank;
    use crate::pilots::{orthonormal_pilot_book, random_pilot_book};
    use crate::testutil::{random_beta, random_downlink_eta};

    /// Direct transcription of the downlink SINR from the estimator operators.
    fn oracle(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, rho_d: f64, eta: &DMatrix<f64>, k: usize) -> f64 {
        let beta = ls.beta();
        let psi = pilots.psi();
        let tr = bank.tau_rho_p();
        let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
        let g = bank.gamma();
        let num = rho_d * (0..m_aps).map(|m| eta[(m, k)].sqrt() * g[(m, k)]).sum::<f64>().powi(2);
        let mut den = 1.0 + rho_d * (0..m_aps).map(|m| eta[(m, k)] * g[(m, k)] * beta[(m, k)]).sum::<f64>();
        for i in (0..k_users).filter(|&i| i != k) {
            let mut t1 = 0.0;
            let mut t2 = Complex64::default();
            let mut t3 = 0.0;
            for m in 0..m_aps {
                let a = bank.a_op(m).column(i);
                t1 += eta[(m, i)] * beta[(m, k)] * a.norm_squared();
                t2 += (psi.column(k).adjoint() * a)[(0, 0)] * (eta[(m, i)].sqrt() * beta[(m, k)]);
                for j in 0..k_users {
                    t3 += eta[(m, i)] * beta[(m, k)] * beta[(m, j)] * (psi.column(j).adjoint() * a)[(0, 0)].norm_sqr();
                }
            }
            den += rho_d * (t1 + tr * (t2.norm_sqr() + t3));
        }
        num / den
    }

    #[test]
    fn matches_direct_transcription() {
        for seed in 0..10 {
            let (m, k) = (5, 4);
            let ls = LargeScale::from_beta(random_beta(m, k, seed)).unwrap();
            let pilots = random_pilot_book(3, k, seed).unwrap();
            let bank = build_lmmse_bank(&ls, &pilots, 3.0).unwrap();
            let eta = random_downlink_eta(&bank, seed);
            let p = DownlinkPower::new(eta.clone(), &bank).unwrap();
            let all = downlink_sinr_all(&ls, &pilots, &bank, 4.0, &p).unwrap();
            for kk in 0..k {
                let want = oracle(&ls, &pilots, &bank, 4.0, &eta, kk);
                assert!((all[kk] / want - 1.0).abs() < 1e-10);
                let one = downlink_sinr_cf(&ls, &pilots, &bank, 4.0, &p, kk).unwrap();
                assert_eq!(one, all[kk]);
            }
        }
    }

    #[test]
    fn zero_power_zero_sinr() {
        let ls = LargeScale::from_beta(random_beta(3, 2, 1)).unwrap();
        let pilots = random_pilot_book(2, 2, 1).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 1.0).unwrap();
        let p = DownlinkPower::new(DMatrix::zeros(3, 2), &bank).unwrap();
        assert_eq!(downlink_sinr_all(&ls, &pilots, &bank, 1.0, &p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn orthonormal_and_collocated_reductions() {
        for seed in 0..20 {
            let (m, k) = (4, 3);
            let ls = LargeScale::from_beta(random_beta(m, k, seed)).unwrap();
            let pilots = orthonormal_pilot_book(4, k, seed).unwrap();
            let bank = build_lmmse_bank(&ls, &pilots, 2.0).unwrap();
            let eta = random_downlink_eta(&bank, seed + 1);
            let p = DownlinkPower::new(eta.clone(), &bank).unwrap();
            for kk in 0..k {
                let a = downlink_sinr_cf(&ls, &pilots, &bank, 3.0, &p, kk).unwrap();
                let b = downlink_sinr_orthonormal(&ls, bank.gamma(), 3.0, &eta, kk);
                assert!((a / b - 1.0).abs() < 1e-9);
            }

            let row = random_beta(1, k, seed + 7);
            let coll = LargeScale::from_beta(DMatrix::from_fn(m, k, |_, j| row[(0, j)])).unwrap();
            let bank = build_lmmse_bank(&coll, &pilots, 2.0).unwrap();
            let eta_k = [0.2, 0.5, 0.3];
            let g = bank.gamma();
            let eta = DMatrix::from_fn(m, k, |mm, j| eta_k[j] / (m as f64 * g[(mm, j)]));
            for kk in 0..k {
                let a = downlink_sinr_orthonormal(&coll, g, 3.0, &eta, kk);
                let b = downlink_sinr_collocated(m, g[(0, kk)], row[(0, kk)], 3.0, &eta_k, kk);
                assert!((a / b - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn budget_enforced() {
        let ls = LargeScale::from_beta(random_beta(2, 2, 1)).unwrap();
        let pilots = random_pilot_book(2, 2, 1).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 1.0).unwrap();
        let full = DownlinkPower::full(&bank);
        for l in full.ap_loads(&bank) {
            assert!((l - 1.0).abs() < 1e-12);
        }
        let over = full.matrix() * 1.01;
        assert!(DownlinkPower::new(over, &bank).is_err());
        assert!(DownlinkPower::new(DMatrix::from_element(2, 2, -1.0), &bank).is_err());
    }
}
