//! Exact feasibility for SINR maps that are linear-fractional in the powers.
//!
//! At a fixed target `t`, `SINR_k >= t` reads `A eta >= t c` with
//! `A_kk = s_k - t d_k` and `A_ki = -t X_ki`. `A` has nonpositive
//! off-diagonal entries, so a nonnegative solution exists iff `A` is a
//! nonsingular M-matrix, and then `eta_min = A^-1 t c` is the elementwise
//! smallest one. The target is reachable within the unit box iff
//! `max eta_min <= 1`.

use nalgebra::{DMatrix, DVector};

use super::{bisect, BisectionSpec, Feasibility, MaxMinOutcome};
use crate::chest::LmmseBank;
use crate::error::Result;
use crate::netgen::LargeScale;
use crate::perf::{
    smallcell_downlink_model, smallcell_uplink_model, uplink_model, Direction, LinearSinrModel, SmallCellAssignment,
    UplinkPower,
};
use crate::pilots::PilotBook;

/// Relative SINR slack accepted when checking a witness.
const WITNESS_TOL: f64 = 1e-9;

/// Decides whether every user can reach `t` with powers in `[0, 1]`. The
/// witness is the minimal-power solution, at which every SINR equals `t`.
pub fn linear_feasible(model: &LinearSinrModel, t: f64) -> Result<Feasibility<Vec<f64>>> {
    let k = model.num_users();
    if t <= 0.0 {
        return Ok(Feasibility::Feasible(vec![1.0; k]));
    }
    let mut a = DMatrix::zeros(k, k);
    for r in 0..k {
        for c in 0..k {
            a[(r, c)] = if r == c {
                model.signal[r] - t * model.self_interference[r]
            } else {
                -t * model.cross[(r, c)]
            };
        }
        if !(a[(r, r)] > 0.0) {
            return Ok(Feasibility::Infeasible);
        }
    }
    let b = DVector::from_fn(k, |r, _| t * model.noise[r]);
    let Some(eta) = a.lu().solve(&b) else {
        return Ok(Feasibility::Infeasible);
    };
    let scale = eta.amax().max(1.0);
    if eta.iter().any(|v| !v.is_finite() || *v < -1e-12 * scale) || eta.max() > 1.0 {
        return Ok(Feasibility::Infeasible);
    }
    let eta: Vec<f64> = eta.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let sinr = model.sinr(&eta)?;
    if sinr.iter().any(|s| *s < t * (1.0 - WITNESS_TOL)) {
        return Ok(Feasibility::Infeasible);
    }
    Ok(Feasibility::Feasible(eta))
}

/// Max-min SINR over the unit box for any linear-fractional model.
pub fn linear_maxmin(model: &LinearSinrModel, spec: &BisectionSpec) -> Result<MaxMinOutcome<Vec<f64>>> {
    let full = vec![1.0; model.num_users()];
    let full_sinr = model.sinr(&full)?;
    bisect(
        spec,
        (full, full_sinr),
        |t| linear_feasible(model, t),
        |w: Vec<f64>| {
            // Scaling every power up raises every SINR; push to the box.
            let peak = w.iter().copied().fold(0.0, f64::max);
            let w: Vec<f64> = if peak > 0.0 { w.iter().map(|v| (v / peak).min(1.0)).collect() } else { w };
            let s = model.sinr(&w)?;
            Ok((w, s))
        },
    )
}

pub fn uplink_feasible(
    t: f64,
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
) -> Result<Feasibility<UplinkPower>> {
    let model = uplink_model(ls, pilots, bank, rho_u)?;
    Ok(match linear_feasible(&model, t)? {
        Feasibility::Feasible(eta) => Feasibility::Feasible(UplinkPower::new(eta)?),
        Feasibility::Infeasible => Feasibility::Infeasible,
    })
}

pub fn uplink_maxmin(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
    spec: &BisectionSpec,
) -> Result<MaxMinOutcome<UplinkPower>> {
    let model = uplink_model(ls, pilots, bank, rho_u)?;
    let out = linear_maxmin(&model, spec)?;
    Ok(MaxMinOutcome {
        power: UplinkPower::new(out.power)?,
        t_star: out.t_star,
        sinr: out.sinr,
        t_lo: out.t_lo,
        t_hi: out.t_hi,
        iterations: out.iterations,
    })
}

/// Small-cell max-min over `eta_sc` (uplink) or `alpha_sc` (downlink). The
/// optimized quantity is the effective SNR `omega` / `mu`; the rate is
/// increasing in it.
#[allow(clippy::too_many_arguments)]
pub fn smallcell_maxmin(
    ls: &LargeScale,
    pilots: &PilotBook,
    assignment: &SmallCellAssignment,
    rho: f64,
    rho_pilot: f64,
    tau: f64,
    direction: Direction,
    spec: &BisectionSpec,
) -> Result<MaxMinOutcome<Vec<f64>>> {
    let model = match direction {
        Direction::Uplink => smallcell_uplink_model(ls, pilots, assignment, rho, rho_pilot, tau)?,
        Direction::Downlink => smallcell_downlink_model(ls, pilots, assignment, rho, rho_pilot, tau)?,
    };
    linear_maxmin(&model, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chest::build_lmmse_bank;
    use crate::netgen::LargeScale;
    use crate::perf::assign_serving_aps;
    use crate::pilots::{orthonormal_pilot_book, random_pilot_book};
    use crate::testutil::random_beta;

    fn instance(seed: u64) -> (LargeScale, PilotBook, LmmseBank) {
        let ls = LargeScale::from_beta(random_beta(8, 5, seed)).unwrap();
        let pilots = random_pilot_book(3, 5, seed).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 5.0).unwrap();
        (ls, pilots, bank)
    }

    #[test]
    fn zero_target_is_feasible() {
        let (ls, pilots, bank) = instance(1);
        let w = uplink_feasible(0.0, &ls, &pilots, &bank, 3.0).unwrap().witness().unwrap();
        assert_eq!(w.as_slice(), &[1.0; 5]);
    }

    #[test]
    fn above_single_user_bound_is_infeasible() {
        let (ls, pilots, bank) = instance(2);
        let model = uplink_model(&ls, &pilots, &bank, 3.0).unwrap();
        let bound = (0..5)
            .map(|k| {
                let mut e = vec![0.0; 5];
                e[k] = 1.0;
                model.sinr(&e).unwrap()[k]
            })
            .fold(0.0, f64::max);
        assert!(!linear_feasible(&model, bound * 1.001).unwrap().is_feasible());
    }

    #[test]
    fn witness_sits_on_target() {
        let (ls, pilots, bank) = instance(3);
        let model = uplink_model(&ls, &pilots, &bank, 3.0).unwrap();
        let t = 0.5 * model.sinr(&[1.0; 5]).unwrap().iter().copied().fold(f64::INFINITY, f64::min);
        let w = linear_feasible(&model, t).unwrap().witness().unwrap();
        for s in model.sinr(&w).unwrap() {
            assert!((s / t - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_instance_threshold_is_full_power_sinr() {
        let k = 4;
        let ls = LargeScale::from_beta(DMatrix::from_element(6, k, 0.7)).unwrap();
        let pilots = orthonormal_pilot_book(k, k, 0).unwrap();
        let bank = build_lmmse_bank(&ls, &pilots, 2.0).unwrap();
        let model = uplink_model(&ls, &pilots, &bank, 3.0).unwrap();
        let common = model.sinr(&[1.0; 4]).unwrap()[0];
        assert!(linear_feasible(&model, common * (1.0 - 1e-9)).unwrap().is_feasible());
        assert!(!linear_feasible(&model, common * (1.0 + 1e-9)).unwrap().is_feasible());
        let out = uplink_maxmin(&ls, &pilots, &bank, 3.0, &BisectionSpec::default()).unwrap();
        assert!(out.power.as_slice().iter().all(|e| (e - 1.0).abs() < 1e-9));
        assert!((out.t_star / common - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maxmin_certificate_and_equalization() {
        for seed in 0..10 {
            let (ls, pilots, bank) = instance(seed);
            let out = uplink_maxmin(&ls, &pilots, &bank, 3.0, &BisectionSpec::default()).unwrap();
            let t = out.t_star;
            assert!(uplink_feasible(t * (1.0 - 1e-3), &ls, &pilots, &bank, 3.0).unwrap().is_feasible());
            assert!(!uplink_feasible(t * (1.0 + 1e-3), &ls, &pilots, &bank, 3.0).unwrap().is_feasible());
            let max = out.sinr.iter().copied().fold(0.0, f64::max);
            assert!(max - t <= 1e-3 * t);
            assert!(out.power.as_slice().iter().copied().fold(0.0, f64::max) >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn smallcell_single_user_full_power() {
        let ls = LargeScale::from_beta(random_beta(3, 1, 4)).unwrap();
        let pilots = random_pilot_book(2, 1, 4).unwrap();
        let a = assign_serving_aps(&ls).unwrap();
        let out = smallcell_maxmin(&ls, &pilots, &a, 2.0, 2.0, 2.0, Direction::Uplink, &BisectionSpec::default()).unwrap();
        assert_eq!(out.power, vec![1.0]);
        let model = smallcell_uplink_model(&ls, &pilots, &a, 2.0, 2.0, 2.0).unwrap();
        assert_eq!(out.t_star, model.sinr(&[1.0]).unwrap()[0]);
    }

    #[test]
    fn smallcell_monotone_in_power_level() {
        let ls = LargeScale::from_beta(random_beta(8, 4, 5)).unwrap();
        let pilots = random_pilot_book(2, 4, 5).unwrap();
        let a = assign_serving_aps(&ls).unwrap();
        let spec = BisectionSpec::default();
        for dir in [Direction::Uplink, Direction::Downlink] {
            let lo = smallcell_maxmin(&ls, &pilots, &a, 1.0, 1.0, 2.0, dir, &spec).unwrap();
            let hi = smallcell_maxmin(&ls, &pilots, &a, 4.0, 1.0, 2.0, dir, &spec).unwrap();
            assert!(hi.t_star >= lo.t_star * (1.0 - 1e-3));
            let max = lo.sinr.iter().copied().fold(0.0, f64::max);
            assert!(max - lo.t_star <= 1e-3 * lo.t_star);
        }
    }
}
