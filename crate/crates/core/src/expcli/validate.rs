//! Closed-form versus Monte Carlo suites behind `cellfree validate`.

use nalgebra::DMatrix;

use crate::chest::{build_lmmse_bank, LmmseBank};
use crate::error::Result;
use crate::mcval::{
    empirical_downlink_terms_all, empirical_sinr, empirical_uplink_terms_all, moment_checks, MomentQuery,
    ValidationReport,
};
use crate::netgen::{
    build_large_scale, noise_power_w, place_network, LargeScale, PowerBudget, PropagationParams, ShadowingMode,
};
use crate::perf::{downlink_sinr_all, uplink_sinr_all, DownlinkPower, UplinkPower};
use crate::pilots::{random_pilot_book, PilotBook};

/// Network size of one validation instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationCase {
    pub num_aps: usize,
    pub num_users: usize,
    pub tau: usize,
}

impl ValidationCase {
    pub fn label(&self) -> String {
        format!("M={} K={} tau={}", self.num_aps, self.num_users, self.tau)
    }
}

/// `M in {4, 8, 16} x K in {2, 4, 8} x tau in {2, 6, 12}`.
pub fn validation_grid() -> Vec<ValidationCase> {
    let mut out = Vec::with_capacity(27);
    for num_aps in [4, 8, 16] {
        for num_users in [2, 4, 8] {
            for tau in [2, 6, 12] {
                out.push(ValidationCase { num_aps, num_users, tau });
            }
        }
    }
    out
}

/// A 100 m network at 20 mW with random pilots, plus uneven power
/// allocations for both directions.
#[derive(Clone, Debug)]
pub struct ValidationInstance {
    pub ls: LargeScale,
    pub pilots: PilotBook,
    pub bank: LmmseBank,
    pub budget: PowerBudget,
    pub eta_up: UplinkPower,
    pub eta_down: DownlinkPower,
}

pub fn validation_instance(case: ValidationCase, seed: u64) -> Result<ValidationInstance> {
    let params = PropagationParams::default();
    let geom = place_network(case.num_aps, case.num_users, 100.0, seed)?;
    let ls = build_large_scale(&geom, &params, ShadowingMode::Uncorrelated, seed)?;
    let pilots = random_pilot_book(case.tau, case.num_users, seed)?;
    let budget = PowerBudget::from_watts(0.02, 0.02, 0.02, noise_power_w(&params))?;
    let bank = build_lmmse_bank(&ls, &pilots, budget.rho_p)?;
    let k = case.num_users;
    let weight: Vec<f64> = (0..k).map(|u| 0.3 + 0.7 * (u + 1) as f64 / k as f64).collect();
    let eta_up = UplinkPower::new(weight.clone())?;
    // Every AP spends its whole budget, split in proportion to the weights.
    let v = bank.est_power();
    let eta = DMatrix::from_fn(case.num_aps, k, |m, u| {
        weight[u] / (0..k).map(|j| weight[j] * v[(m, j)]).sum::<f64>()
    });
    let eta_down = DownlinkPower::new(eta, &bank)?;
    Ok(ValidationInstance { ls, pilots, bank, budget, eta_up, eta_down })
}

/// Per-user SINR agreement in both directions for one case.
pub fn validate_sinr(case: ValidationCase, n_samples: usize, seed: u64, report: &mut ValidationReport) -> Result<()> {
    let inst = validation_instance(case, seed)?;
    let (ls, pilots, bank, b) = (&inst.ls, &inst.pilots, &inst.bank, &inst.budget);
    let up = uplink_sinr_all(ls, pilots, bank, b.rho_u, &inst.eta_up)?;
    let up_mc = empirical_uplink_terms_all(ls, pilots, bank, b.rho_u, &inst.eta_up, n_samples, seed)?;
    for (k, (c, t)) in up.iter().zip(&up_mc).enumerate() {
        report.push(format!("uplink {} k={k}", case.label()), *c, empirical_sinr(t));
    }
    let down = downlink_sinr_all(ls, pilots, bank, b.rho_d, &inst.eta_down)?;
    let down_mc = empirical_downlink_terms_all(ls, pilots, bank, b.rho_d, &inst.eta_down, n_samples, seed)?;
    for (k, (c, t)) in down.iter().zip(&down_mc).enumerate() {
        report.push(format!("downlink {} k={k}", case.label()), *c, empirical_sinr(t));
    }
    Ok(())
}

/// Estimate orthogonality, cross-AP independence and fourth moment for the
/// first user at the first two APs of `case`.
pub fn validate_moments(case: ValidationCase, n_samples: usize, seed: u64, report: &mut ValidationReport) -> Result<()> {
    let inst = validation_instance(case, seed)?;
    let q = MomentQuery { m: 0, n: 1, k: 0 };
    let r = moment_checks(&inst.bank, &inst.ls, &inst.pilots, inst.budget.rho_p, &[q], n_samples, seed)?;
    let r = r[0];
    let label = case.label();
    report.push_with(format!("E[g_hat g_tilde*] {label}"), 0.0, r.estimate_error_corr, r.estimate_error_corr.within_se(0.0, 3.0));
    report.push_with(format!("E[g_hat_m g_hat_n*] {label}"), 0.0, r.cross_ap_corr, r.cross_ap_corr.within_se(0.0, 3.0));
    let fourth = r.fourth_moment;
    report.push_with(
        format!("E|g_hat|^4 {label}"),
        r.fourth_moment_target,
        fourth,
        fourth.relative_error(r.fourth_moment_target) <= 0.03,
    );
    Ok(())
}

/// SINR agreement over `cases` followed by the moment checks on the largest.
pub fn run_validation(cases: &[ValidationCase], n_samples: usize, seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    for (i, c) in cases.iter().enumerate() {
        validate_sinr(*c, n_samples, seed.wrapping_add(i as u64), &mut report)?;
    }
    if let Some(big) = cases.iter().max_by_key(|c| (c.num_aps, c.num_users, c.tau)) {
        validate_moments(*big, n_samples, seed, &mut report)?;
    }
    Ok(report)
}
