//! Experiment runner: configuration, realization sweeps, CDF tables and CSV
//! output, plus the Monte Carlo validation suites used by the CLI.

mod cdf;
mod config;
mod run;
mod validate;

pub use cdf::{emit_csv, CdfRow, CdfTable};
pub use config::{
    ExperimentConfig, ExperimentSection, NetgenSection, PerfSection, PilotChoice, PilotSection, PowerControl,
    PowersSection, SolverSection,
};
pub use run::{
    evaluate_realization, run_experiment, suboptimal_estimation_mode, write_outputs, ExperimentRun,
    FailedRealization, RealizationOutcome, RunSummary, FAILURE_FLAG_FRACTION,
};
pub use validate::{
    run_validation, validate_moments, validate_sinr, validation_grid, validation_instance, ValidationCase,
    ValidationInstance,
};

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::perf::{Direction, SystemKind};

/// Axes of a sweep; each list defaults to the base config's single value.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub systems: Vec<SystemKind>,
    pub power_controls: Vec<PowerControl>,
    pub directions: Vec<Direction>,
}

/// A base experiment plus a `[sweep]` table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axes: SweepAxes,
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let axes = match table.remove("sweep") {
            Some(v) => v.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => SweepAxes::default(),
        };
        let base: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(Self { base, axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Every combination of the axes, in system, power-control, direction
    /// order. Combinations the runner does not support are returned in the
    /// second list with the reason.
    pub fn expand(&self) -> (Vec<ExperimentConfig>, Vec<(String, String)>) {
        let e = &self.base.experiment;
        let (mut ok, mut skipped) = (Vec::new(), Vec::new());
        for s in axis(&self.axes.systems, e.system) {
            for p in axis(&self.axes.power_controls, e.power_control) {
                for d in axis(&self.axes.directions, e.direction) {
                    let mut cfg = self.base.clone();
                    cfg.experiment.system = s;
                    cfg.experiment.power_control = p;
                    cfg.experiment.direction = d;
                    match cfg.validate() {
                        Ok(()) => ok.push(cfg),
                        Err(err) => skipped.push((cfg.tag(), err.to_string())),
                    }
                }
            }
        }
        (ok, skipped)
    }
}

fn axis<T: Copy>(values: &[T], default: T) -> Vec<T> {
    if values.is_empty() {
        vec![default]
    } else {
        values.to_vec()
    }
}
