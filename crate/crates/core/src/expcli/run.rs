//! Realization sweeps: one fresh network, pilot book and estimator bank per
//! realization, power control, then per-user throughput and uplink EE.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::cdf::{emit_csv, CdfRow, CdfTable};
use super::config::{ExperimentConfig, PilotChoice, PowerControl};
use crate::chest::{build_bank, build_suboptimal_bank, LmmseBank};
use crate::error::{Error, Result};
use crate::netgen::{build_large_scale, noise_power_w, place_network, LargeScale, PowerBudget};
use crate::perf::{
    assign_serving_aps, downlink_sinr_all, energy_efficiency, rate_bits, smallcell_downlink_model,
    smallcell_uplink_model, throughput, uplink_model, Direction, DownlinkPower, PerfReport, ReportMeta, UplinkPower,
};
use crate::pilots::{orthonormal_pilot_book, random_pilot_book, PilotBook};
use crate::power::{
    build_cone_problem, downlink_maxmin, drop_and_retarget, linear_maxmin, target_sinr_iterate, TargetSpec,
};
use crate::rng::realization_seed;
use crate::special::smallcell_rate_bits;

/// Share of failed realizations above which a run is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.01;

/// The baseline estimator `a_mk = sqrt(tau rho_p) beta_mk / (tau rho_p beta_mk + 1) psi_k`,
/// packaged as a bank so the same SINR machinery applies.
pub fn suboptimal_estimation_mode(ls: &LargeScale, pilots: &PilotBook, rho_p: f64) -> Result<LmmseBank> {
    build_suboptimal_bank(ls, pilots, rho_p)
}

/// Everything one realization produces.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationOutcome {
    pub index: usize,
    /// Users that stayed in service; all of them unless users were dropped.
    pub active: Vec<usize>,
    pub report: PerfReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailedRealization {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Runs realization `index` of `cfg`.
pub fn evaluate_realization(cfg: &ExperimentConfig, index: usize) -> Result<RealizationOutcome> {
    let seed = realization_seed(cfg.experiment.base_seed, index as u64);
    let (net, exp) = (&cfg.netgen, &cfg.experiment);
    let k = net.num_users;
    let tau = cfg.pilots.tau;
    let geom = place_network(net.num_aps, k, net.area_side_m, seed)?;
    let ls = build_large_scale(&geom, &net.propagation, net.shadowing, seed)?;
    let pilots = match cfg.pilots.kind {
        PilotChoice::Random => random_pilot_book(tau, k, seed)?,
        PilotChoice::Orthonormal => orthonormal_pilot_book(tau, k, seed)?,
    };
    let w = &cfg.powers_w;
    let budget = PowerBudget::from_watts(w.pilot, w.uplink, w.downlink, noise_power_w(&net.propagation))?;
    let bisection = cfg.bisection();

    let mut active: Vec<usize> = (0..k).collect();
    let mut uplink_eta = None;
    let (sinr, rates, overhead) = match (cfg.estimator(), exp.direction) {
        (Some(est), Direction::Uplink) => {
            let bank = build_bank(est, &ls, &pilots, budget.rho_p)?;
            let model = uplink_model(&ls, &pilots, &bank, budget.rho_u)?;
            let eta = match exp.power_control {
                PowerControl::MaxPower => vec![1.0; k],
                PowerControl::Maxmin => linear_maxmin(&model, &bisection)?.power,
                PowerControl::TargetSinr if cfg.solver.target_sinr_db.is_some() => {
                    let delta = 10f64.powf(cfg.solver.target_sinr_db.unwrap_or_default() / 10.0);
                    let spec = TargetSpec { delta: vec![delta; k], ..cfg.target_spec(0.0) };
                    target_sinr_iterate(&model, budget.rho_u, &spec)?.eta
                }
                PowerControl::TargetSinr | PowerControl::TargetSinrDrop => {
                    let f = if exp.power_control == PowerControl::TargetSinr { 0.0 } else { cfg.solver.drop_fraction };
                    let out = drop_and_retarget(&model, budget.rho_u, &cfg.target_spec(f), &bisection)?;
                    active = out.active;
                    out.eta
                }
            };
            let sinr = model.sinr(&eta)?;
            uplink_eta = Some(UplinkPower::new(eta)?);
            let rates = rate_bits(&sinr);
            (sinr, rates, tau as f64)
        }
        (Some(est), Direction::Downlink) => {
            let bank = build_bank(est, &ls, &pilots, budget.rho_p)?;
            let eta = match exp.power_control {
                PowerControl::MaxPower => DownlinkPower::full(&bank),
                PowerControl::Maxmin => {
                    downlink_maxmin(&build_cone_problem(&ls, &pilots, &bank, budget.rho_d)?, &bisection)?.power
                }
                pc => return Err(Error::Config(format!("{} is not a downlink scheme", pc.as_str()))),
            };
            let sinr = downlink_sinr_all(&ls, &pilots, &bank, budget.rho_d, &eta)?;
            let rates = rate_bits(&sinr);
            (sinr, rates, tau as f64)
        }
        (None, dir) => {
            // Pilot powers of the small-cell training phases equal the uplink data power.
            let assignment = assign_serving_aps(&ls)?;
            let t = tau as f64;
            let model = match dir {
                Direction::Uplink => smallcell_uplink_model(&ls, &pilots, &assignment, budget.rho_u, budget.rho_u, t)?,
                Direction::Downlink => {
                    smallcell_downlink_model(&ls, &pilots, &assignment, budget.rho_d, budget.rho_u, t)?
                }
            };
            let power = match exp.power_control {
                PowerControl::MaxPower => vec![1.0; k],
                PowerControl::Maxmin => linear_maxmin(&model, &bisection)?.power,
                pc => return Err(Error::Config(format!("{} is not a small-cell scheme", pc.as_str()))),
            };
            let omega = model.sinr(&power)?;
            let rates: Vec<f64> = omega.iter().map(|w| smallcell_rate_bits(*w)).collect();
            if dir == Direction::Uplink {
                uplink_eta = Some(UplinkPower::new(power)?);
            }
            (omega, rates, 2.0 * t)
        }
    };

    let b = net.propagation.bandwidth_hz;
    let tau_c = cfg.perf.tau_c as f64;
    let mut thr = rates.iter().map(|r| throughput(*r, b, overhead, tau_c)).collect::<Result<Vec<f64>>>()?;
    let mut sinr = sinr;
    let mut rates = rates;
    for u in (0..k).filter(|u| active.binary_search(u).is_err()) {
        sinr[u] = 0.0;
        rates[u] = 0.0;
        thr[u] = 0.0;
    }
    if sinr.iter().chain(&thr).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("per-user performance"));
    }
    let energy_eff = match &uplink_eta {
        Some(eta) => Some(energy_efficiency(&thr, eta, w.uplink)?),
        None => None,
    };
    let report = PerfReport {
        sinr,
        rate_bits: rates,
        throughput: thr,
        energy_eff,
        meta: ReportMeta { tag: cfg.tag(), seed, system: exp.system, direction: exp.direction },
    };
    Ok(RealizationOutcome { index, active, report })
}

/// Aggregate figures of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub tag: String,
    pub n_realizations: usize,
    pub n_failed: usize,
    /// More than 1% of the realizations failed.
    pub flagged: bool,
    pub n_samples: usize,
    pub median: Option<f64>,
    pub outage_95: Option<f64>,
    pub mean: Option<f64>,
    pub ee_median: Option<f64>,
    pub ee_mean: Option<f64>,
    pub failures: Vec<FailedRealization>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:e}"));
        writeln!(f, "run: {}", self.tag)?;
        writeln!(f, "realizations: {}", self.n_realizations)?;
        writeln!(f, "failed: {}{}", self.n_failed, if self.flagged { " (FLAGGED: above 1%)" } else { "" })?;
        writeln!(f, "throughput samples: {}", self.n_samples)?;
        writeln!(f, "throughput median [bit/s]: {}", opt(self.median))?;
        writeln!(f, "throughput 95%-outage [bit/s]: {}", opt(self.outage_95))?;
        writeln!(f, "throughput mean [bit/s]: {}", opt(self.mean))?;
        writeln!(f, "energy efficiency median [bit/J]: {}", opt(self.ee_median))?;
        writeln!(f, "energy efficiency mean [bit/J]: {}", opt(self.ee_mean))?;
        for fail in &self.failures {
            writeln!(f, "failure: realization {} seed {}: {}", fail.index, fail.seed, fail.message)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    /// Per-user throughput of active users, pooled over realizations.
    pub throughput: CdfTable,
    /// Per-realization uplink energy efficiency.
    pub energy_eff: Option<CdfTable>,
    pub outcomes: Vec<RealizationOutcome>,
    pub summary: RunSummary,
}

/// Runs every realization in parallel and assembles the tables in
/// realization order. Failed realizations are counted, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let n = cfg.experiment.n_realizations;
    let results: Vec<Result<RealizationOutcome>> = (0..n).into_par_iter().map(|i| evaluate_realization(cfg, i)).collect();

    let mut outcomes = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(FailedRealization {
                index: i,
                seed: realization_seed(cfg.experiment.base_seed, i as u64),
                message: e.to_string(),
            }),
        }
    }

    let e = &cfg.experiment;
    let (sys, pc, dir) = (e.system.as_str(), e.power_control.as_str(), e.direction.as_str());
    let rows: Vec<CdfRow> = outcomes
        .iter()
        .flat_map(|o| o.active.iter().map(|&u| CdfRow { value: o.report.throughput[u], seed: o.report.meta.seed }))
        .collect();
    let throughput = CdfTable::new(rows, sys, pc, dir)?;
    let energy_eff = if e.direction == Direction::Uplink {
        let rows = outcomes
            .iter()
            .filter_map(|o| o.report.energy_eff.map(|v| CdfRow { value: v, seed: o.report.meta.seed }))
            .collect();
        Some(CdfTable::new(rows, sys, pc, dir)?)
    } else {
        None
    };

    let n_failed = failures.len();
    let summary = RunSummary {
        tag: cfg.tag(),
        n_realizations: n,
        n_failed,
        flagged: n_failed as f64 > FAILURE_FLAG_FRACTION * n as f64,
        n_samples: throughput.len(),
        median: throughput.median(),
        outage_95: throughput.outage_95(),
        mean: throughput.mean(),
        ee_median: energy_eff.as_ref().and_then(CdfTable::median),
        ee_mean: energy_eff.as_ref().and_then(CdfTable::mean),
        failures,
    };
    Ok(ExperimentRun { config: cfg.clone(), throughput, energy_eff, outcomes, summary })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
}

/// Writes `throughput.csv`, `energy_efficiency.csv` (uplink),
/// `config.toml` and `summary.txt` into `dir/<tag>`. Returns that directory.
pub fn write_outputs(run: &ExperimentRun, dir: &Path) -> Result<PathBuf> {
    let out = dir.join(run.config.tag());
    std::fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
    write_text(&out.join("config.toml"), &run.config.to_toml())?;
    write_text(&out.join("summary.txt"), &run.summary.to_string())?;
    if run.throughput.is_empty() {
        return Err(Error::NumericalFailure { solver: "experiment", detail: "every realization failed".into() });
    }
    emit_csv(&run.throughput, &out.join("throughput.csv"))?;
    if let Some(ee) = run.energy_eff.as_ref().filter(|t| !t.is_empty()) {
        emit_csv(ee, &out.join("energy_efficiency.csv"))?;
    }
    Ok(out)
}
