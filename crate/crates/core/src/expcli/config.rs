//! Experiment configuration. One TOML table per module; every key has a
//! default matching the uplink IoT scenario (M = 128, K = 40, tau = 60,
//! D = 100 m, 20 mW everywhere).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chest::Estimator;
use crate::error::{Error, Result};
use crate::netgen::{PropagationParams, ShadowingMode};
use crate::perf::{Direction, SystemKind};
use crate::power::{BisectionSpec, TargetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerControl {
    MaxPower,
    Maxmin,
    /// Algorithm 1 at a fixed target, or at the max-min value when no target
    /// is configured.
    TargetSinr,
    /// Algorithm 1 with the common target raised until `drop_fraction` of the
    /// users cannot reach it.
    TargetSinrDrop,
}

impl PowerControl {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MaxPower => "max_power",
            Self::Maxmin => "maxmin",
            Self::TargetSinr => "target_sinr",
            Self::TargetSinrDrop => "target_sinr_drop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotChoice {
    Random,
    Orthonormal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub system: SystemKind,
    pub power_control: PowerControl,
    pub direction: Direction,
    pub n_realizations: usize,
    pub base_seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            system: SystemKind::CellfreeLmmse,
            power_control: PowerControl::Maxmin,
            direction: Direction::Uplink,
            n_realizations: 500,
            base_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetgenSection {
    pub num_aps: usize,
    pub num_users: usize,
    pub area_side_m: f64,
    pub shadowing: ShadowingMode,
    pub propagation: PropagationParams,
}

impl Default for NetgenSection {
    fn default() -> Self {
        Self {
            num_aps: 128,
            num_users: 40,
            area_side_m: 100.0,
            shadowing: ShadowingMode::Uncorrelated,
            propagation: PropagationParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    pub tau: usize,
    pub kind: PilotChoice,
}

impl Default for PilotSection {
    fn default() -> Self {
        Self { tau: 60, kind: PilotChoice::Random }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowersSection {
    pub pilot: f64,
    pub uplink: f64,
    pub downlink: f64,
}

impl Default for PowersSection {
    fn default() -> Self {
        Self { pilot: 0.02, uplink: 0.02, downlink: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfSection {
    /// Coherence interval in symbols.
    pub tau_c: usize,
}

impl Default for PerfSection {
    fn default() -> Self {
        Self { tau_c: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub target_max_iters: usize,
    pub drop_fraction: f64,
    /// Fixed common target for `target_sinr`, in dB.
    pub target_sinr_db: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            max_iters: 60,
            epsilon: 1e-4,
            target_max_iters: 500,
            drop_fraction: 0.05,
            target_sinr_db: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub netgen: NetgenSection,
    pub pilots: PilotSection,
    pub powers_w: PowersSection,
    pub perf: PerfSection,
    pub solver: SolverSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// `system_powercontrol_direction`, used to name output directories.
    pub fn tag(&self) -> String {
        let e = &self.experiment;
        format!("{}_{}_{}", e.system.as_str(), e.power_control.as_str(), e.direction.as_str())
    }

    pub fn estimator(&self) -> Option<Estimator> {
        match self.experiment.system {
            SystemKind::CellfreeLmmse => Some(Estimator::Lmmse),
            SystemKind::CellfreeSuboptimal => Some(Estimator::Suboptimal),
            SystemKind::Smallcell => None,
        }
    }

    pub fn bisection(&self) -> BisectionSpec {
        BisectionSpec { rel_tol: self.solver.rel_tol, max_iters: self.solver.max_iters, ..BisectionSpec::default() }
    }

    pub fn target_spec(&self, drop_fraction: f64) -> TargetSpec {
        TargetSpec {
            delta: Vec::new(),
            epsilon: self.solver.epsilon,
            max_iters: self.solver.target_max_iters,
            drop_fraction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let (e, n, p) = (&self.experiment, &self.netgen, &self.pilots);
        if e.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        if n.num_aps == 0 || n.num_users == 0 || p.tau == 0 {
            return bad("num_aps, num_users and tau must be at least 1".into());
        }
        if !(n.area_side_m > 0.0 && n.area_side_m.is_finite()) {
            return bad(format!("area_side_m must be positive, got {}", n.area_side_m));
        }
        if p.tau >= self.perf.tau_c {
            return bad(format!("tau = {} must be below tau_c = {}", p.tau, self.perf.tau_c));
        }
        if p.kind == PilotChoice::Orthonormal && p.tau < n.num_users {
            return bad(format!("orthonormal pilots need tau >= K, got tau = {} and K = {}", p.tau, n.num_users));
        }
        if e.system == SystemKind::Smallcell {
            if n.num_aps < n.num_users {
                return bad("small cells need at least as many APs as users".into());
            }
            if 2 * p.tau >= self.perf.tau_c {
                return bad(format!("small-cell overhead 2 tau = {} must be below tau_c", 2 * p.tau));
            }
        }
        let target = matches!(e.power_control, PowerControl::TargetSinr | PowerControl::TargetSinrDrop);
        if target && (e.direction == Direction::Downlink || e.system == SystemKind::Smallcell) {
            return bad(format!(
                "{} is an uplink cell-free scheme, not available for {} {}",
                e.power_control.as_str(),
                e.system.as_str(),
                e.direction.as_str()
            ));
        }
        for (name, w) in [("pilot", self.powers_w.pilot), ("uplink", self.powers_w.uplink), ("downlink", self.powers_w.downlink)] {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("{name} power must be positive, got {w}"));
            }
        }
        let s = &self.solver;
        if !(s.rel_tol > 0.0) || s.max_iters == 0 || !(s.epsilon > 0.0) || s.target_max_iters == 0 {
            return bad("solver tolerances and iteration caps must be positive".into());
        }
        if !(0.0..1.0).contains(&s.drop_fraction) {
            return bad(format!("drop_fraction must lie in [0, 1), got {}", s.drop_fraction));
        }
        if let Some(db) = s.target_sinr_db {
            if !db.is_finite() {
                return bad("target_sinr_db must be finite".into());
            }
        }
        n.propagation.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
