//! Cell-free uplink SINR with per-AP linear estimation and CPU combining.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::linear::LinearSinrModel;
use crate::chest::LmmseBank;
use crate::error::{invalid, mismatch, Result};
use crate::netgen::LargeScale;
use crate::pilots::PilotBook;

/// Uplink power coefficients `eta_k` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UplinkPower(Vec<f64>);

impl UplinkPower {
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = eta.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("uplink eta[{k}] = {v} outside [0, 1]")));
        }
        Ok(Self(eta))
    }

    pub fn full(k: usize) -> Self {
        Self(vec![1.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank) -> Result<()> {
    if bank.num_aps() != ls.num_aps() || bank.num_users() != ls.num_users() || pilots.num_users() != ls.num_users() {
        return Err(mismatch("bank, pilots and large-scale matrix disagree"));
    }
    Ok(())
}

/// Row `k` of the uplink model: `(s_k, c_k, d_k, X_k.)`.
fn uplink_row(ls: &LargeScale, bank: &LmmseBank, rho_u: f64, k: usize) -> (f64, f64, f64, Vec<f64>) {
    let beta = ls.beta();
    let (gamma, power) = (bank.gamma(), bank.est_power());
    let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
    let tau_rho = bank.tau_rho_p();
    let sum_gamma: f64 = gamma.column(k).sum();
    let noise: f64 = power.column(k).sum();
    let own: f64 = (0..m_aps).map(|m| power[(m, k)] * beta[(m, k)]).sum();
    let cross = (0..k_users)
        .map(|i| {
            if i == k {
                return 0.0;
            }
            let mut spread = 0.0;
            let mut coherent = Complex64::default();
            for m in 0..m_aps {
                spread += beta[(m, i)] * power[(m, k)];
                coherent += bank.pilot_proj(m)[(i, k)] * beta[(m, i)];
            }
            rho_u * (spread + tau_rho * coherent.norm_sqr())
        })
        .collect();
    (rho_u * sum_gamma * sum_gamma, noise, rho_u * own, cross)
}

/// Uplink SINR as a linear-fractional model in `eta`.
pub fn uplink_model(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, rho_u: f64) -> Result<LinearSinrModel> {
    check(ls, pilots, bank)?;
    let k_users = ls.num_users();
    let mut model = LinearSinrModel {
        signal: DVector::zeros(k_users),
        noise: DVector::zeros(k_users),
        self_interference: DVector::zeros(k_users),
        cross: DMatrix::zeros(k_users, k_users),
    };
    for k in 0..k_users {
        let (s, c, d, x) = uplink_row(ls, bank, rho_u, k);
        model.signal[k] = s;
        model.noise[k] = c;
        model.self_interference[k] = d;
        for (i, v) in x.into_iter().enumerate() {
            model.cross[(k, i)] = v;
        }
    }
    Ok(model)
}

/// Closed-form uplink SINR of user `k`.
pub fn uplink_sinr_cf(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
    eta: &UplinkPower,
    k: usize,
) -> Result<f64> {
    check(ls, pilots, bank)?;
    if eta.len() != ls.num_users() || k >= ls.num_users() {
        return Err(mismatch("power vector or user index does not match the instance"));
    }
    let eta = eta.as_slice();
    let (s, c, d, x) = uplink_row(ls, bank, rho_u, k);
    let cross: f64 = x.iter().zip(eta).map(|(x, e)| x * e).sum();
    Ok(eta[k] * s / (c + eta[k] * d + cross))
}

/// Closed-form uplink SINR of every user.
pub fn uplink_sinr_all(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
    eta: &UplinkPower,
) -> Result<Vec<f64>> {
    uplink_model(ls, pilots, bank, rho_u)?.sinr(eta.as_slice())
}

/// Uplink SINR when pilots are orthonormal:
/// `rho_u eta_k (sum_m gamma_mk)^2 / (sum_m gamma_mk + rho_u sum_i eta_i sum_m gamma_mk beta_mi)`.
pub fn uplink_sinr_orthonormal(
    ls: &LargeScale,
    gamma: &DMatrix<f64>,
    rho_u: f64,
    eta: &UplinkPower,
    k: usize,
) -> Result<f64> {
    if gamma.shape() != ls.beta().shape() || eta.len() != ls.num_users() {
        return Err(mismatch("gamma, beta and eta shapes disagree"));
    }
    let beta = ls.beta();
    let eta = eta.as_slice();
    let sum_gamma: f64 = gamma.column(k).sum();
    let interference: f64 = (0..eta.len())
        .map(|i| eta[i] * (0..ls.num_aps()).map(|m| gamma[(m, k)] * beta[(m, i)]).sum::<f64>())
        .sum();
    Ok(rho_u * eta[k] * sum_gamma * sum_gamma / (sum_gamma + rho_u * interference))
}

/// Uplink SINR with all `M` antennas collocated (`beta_mk = beta_k`):
/// `rho_u eta_k M gamma_k / (1 + rho_u sum_i eta_i beta_i)`.
pub fn uplink_sinr_collocated(num_aps: usize, gamma_k: f64, beta: &[f64], rho_u: f64, eta: &UplinkPower, k: usize) -> f64 {
    let eta = eta.as_slice();
    let load: f64 = beta.iter().zip(eta).map(|(b, e)| b * e).sum();
    rho_u * eta[k] * num_aps as f64 * gamma_k / (1.0 + rho_u * load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chest::{build_lmmse_bank, build_suboptimal_bank};
    use crate::pilots::{orthonormal_pilot_book, random_pilot_book};
    use crate::testutil::random_beta;

    /// Direct transcription of the uplink SINR from the estimator operators.
    fn oracle(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, rho_u: f64, eta: &[f64], k: usize) -> f64 {
        let beta = ls.beta();
        let psi = pilots.psi();
        let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
        let tr = bank.tau_rho_p();
        let gamma = |m: usize| {
            let a = bank.a_op(m).column(k);
            tr.sqrt() * beta[(m, k)] * (psi.column(k).adjoint() * a)[(0, 0)].re
        };
        let num: f64 = (0..m_aps).map(gamma).sum::<f64>().powi(2) * rho_u * eta[k];
        let mut den: f64 = (0..m_aps).map(|m| gamma(m) * (1.0 + rho_u * eta[k] * beta[(m, k)])).sum();
        for i in (0..k_users).filter(|&i| i != k) {
            let mut t1 = 0.0;
            let mut t2 = Complex64::default();
            let mut t3 = 0.0;
            for m in 0..m_aps {
                let a = bank.a_op(m).column(k);
                t1 += beta[(m, i)] * a.norm_squared();
                t2 += (psi.column(i).adjoint() * a)[(0, 0)] * beta[(m, i)];
                for j in 0..k_users {
                    t3 += beta[(m, i)] * beta[(m, j)] * (psi.column(j).adjoint() * a)[(0, 0)].norm_sqr();
                }
            }
            den += rho_u * eta[i] * (t1 + tr * (t2.norm_sqr() + t3));
        }
        num / den
    }

    #[test]
    fn matches_direct_transcription() {
        for seed in 0..10 {
            let (m, k, tau) = (6, 5, 3);
            let ls = LargeScale::from_beta(random_beta(m, k, seed)).unwrap();
            let pilots = random_pilot_book(tau, k, seed + 100).unwrap();
            let bank = build_lmmse_bank(&ls, &pilots, 4.0).unwrap();
            let eta: Vec<f64> = (0..k).map(|i| 0.2 + 0.15 * i as f64).collect();
            let p = UplinkPower::new(eta.clone()).unwrap();
            let all = uplink_sinr_all(&ls, &pilots, &bank, 3.0, &p).unwrap();
            for kk in 0..k {
                let want = oracle(&ls, &pilots, &bank, 3.0, &eta, kk);
                let got = uplink_sinr_cf(&ls, &pilots, &bank, 3.0, &p, kk).unwrap();
                assert!((got / want - 1.0).abs() < 1e-10, "{got} vs {want}");
                assert!((all[kk] / want - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_user_hand_value() {
        let ls = LargeScale::from_beta(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let pilots = orthonormal_pilot_book(1, 1, 0).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 1.0).unwrap();
        let s = uplink_sinr_cf(&ls, &pilots, &bank, 1.0, &UplinkPower::full(1), 0).unwrap();
        assert!((s - 0.25).abs() < 1e-14);
        let s = uplink_sinr_orthonormal(&ls, bank.gamma(), 1.0, &UplinkPower::full(1), 0).unwrap();
        assert!((s - 0.25).abs() < 1e-14);
    }

    #[test]
    fn zero_power_zero_sinr() {
        let ls = LargeScale::from_beta(random_beta(3, 3, 1)).unwrap();
        let pilots = random_pilot_book(2, 3, 1).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 1.0).unwrap();
        let z = UplinkPower::new(vec![0.0; 3]).unwrap();
        assert!(uplink_sinr_all(&ls, &pilots, &bank, 1.0, &z).unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn orthonormal_and_collocated_reductions() {
        for seed in 0..20 {
            let (m, k) = (5, 4);
            let ls = LargeScale::from_beta(random_beta(m, k, seed)).unwrap();
            let pilots = orthonormal_pilot_book(6, k, seed).unwrap();
            let bank = build_lmmse_bank(&ls, &pilots, 2.0).unwrap();
            let p = UplinkPower::new(vec![0.9, 0.3, 0.5, 1.0]).unwrap();
            for kk in 0..k {
                let a = uplink_sinr_cf(&ls, &pilots, &bank, 5.0, &p, kk).unwrap();
                let b = uplink_sinr_orthonormal(&ls, bank.gamma(), 5.0, &p, kk).unwrap();
                assert!((a / b - 1.0).abs() < 1e-9);
            }

            let row = random_beta(1, k, seed + 50);
            let coll = LargeScale::from_beta(DMatrix::from_fn(m, k, |_, j| row[(0, j)])).unwrap();
            let bank = build_lmmse_bank(&coll, &pilots, 2.0).unwrap();
            let betas: Vec<f64> = row.iter().copied().collect();
            for kk in 0..k {
                let a = uplink_sinr_orthonormal(&coll, bank.gamma(), 5.0, &p, kk).unwrap();
                let b = uplink_sinr_collocated(m, bank.gamma()[(0, kk)], &betas, 5.0, &p, kk);
                assert!((a / b - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn suboptimal_matches_lmmse_when_orthonormal() {
        let ls = LargeScale::from_beta(random_beta(4, 3, 9)).unwrap();
        let pilots = orthonormal_pilot_book(3, 3, 9).unwrap();
        let a = build_lmmse_bank(&ls, &pilots, 2.0).unwrap();
        let b = build_suboptimal_bank(&ls, &pilots, 2.0).unwrap();
        let p = UplinkPower::new(vec![0.4, 1.0, 0.7]).unwrap();
        let x = uplink_sinr_all(&ls, &pilots, &a, 3.0, &p).unwrap();
        let y = uplink_sinr_all(&ls, &pilots, &b, 3.0, &p).unwrap();
        for (x, y) in x.iter().zip(&y) {
            assert!((x / y - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_in_own_and_other_powers() {
        let ls = LargeScale::from_beta(random_beta(6, 4, 3)).unwrap();
        let pilots = random_pilot_book(2, 4, 3).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 3.0).unwrap();
        let model = uplink_model(&ls, &pilots, &bank, 2.0).unwrap();
        let base = vec![0.5, 0.6, 0.4, 0.7];
        let s0 = model.sinr(&base).unwrap();
        for i in 0..4 {
            let mut up = base.clone();
            up[i] += 1e-3;
            let s1 = model.sinr(&up).unwrap();
            for k in 0..4 {
                if k == i {
                    assert!(s1[k] > s0[k]);
                } else {
                    assert!(s1[k] <= s0[k]);
                }
            }
        }
        let scaled: Vec<f64> = base.iter().map(|e| e * 1.3).collect();
        let s2 = model.sinr(&scaled).unwrap();
        assert!(s2.iter().zip(&s0).all(|(a, b)| a > b));
    }

    #[test]
    fn rejects_out_of_box_powers() {
        assert!(UplinkPower::new(vec![1.1]).is_err());
        assert!(UplinkPower::new(vec![-0.1]).is_err());
        assert!(UplinkPower::new(vec![f64::NAN]).is_err());
    }
}
