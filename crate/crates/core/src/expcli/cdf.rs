//! Empirical CDFs and their CSV form.

use std::path::Path;

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// One sample with the seed of the realization it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdfRow {
    pub value: f64,
    pub seed: u64,
}

/// Per-user values pooled over realizations, sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct CdfTable {
    rows: Vec<CdfRow>,
    pub system: String,
    pub power_control: String,
    pub direction: String,
}

impl CdfTable {
    /// Sorts by value, ties by seed. Non-finite values are rejected.
    pub fn new(
        mut rows: Vec<CdfRow>,
        system: impl Into<String>,
        power_control: impl Into<String>,
        direction: impl Into<String>,
    ) -> Result<Self> {
        if rows.iter().any(|r| !r.value.is_finite()) {
            return Err(Error::NonFinite("CDF sample"));
        }
        rows.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
        Ok(Self { rows, system: system.into(), power_control: power_control.into(), direction: direction.into() })
    }

    pub fn rows(&self) -> &[CdfRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Nearest-rank percentile, `p` in `[0, 100]`: the smallest sample with at
    /// least `p`% of the table at or below it.
    pub fn percentile(&self, p: f64) -> Option<f64> {
        if self.rows.is_empty() || !(0.0..=100.0).contains(&p) {
            return None;
        }
        let n = self.rows.len();
        let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
        Some(self.rows[rank - 1].value)
    }

    pub fn median(&self) -> Option<f64> {
        self.percentile(50.0)
    }

    /// The 95%-outage value: the lowest value among the best 95%.
    pub fn outage_95(&self) -> Option<f64> {
        self.percentile(5.0)
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.value).sum::<f64>() / self.rows.len() as f64)
    }
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    value: String,
    empirical_cdf: String,
    system: &'a str,
    power_control: &'a str,
    direction: &'a str,
    seed: u64,
}

/// Writes `value, empirical_cdf, system, power_control, direction, seed`,
/// numbers in shortest round-trip scientific notation.
pub fn emit_csv(table: &CdfTable, path: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(invalid("refusing to write an empty CDF table"));
    }
    let wrap = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    let n = table.len() as f64;
    for (i, r) in table.rows.iter().enumerate() {
        w.serialize(CsvRecord {
            value: format!("{:e}", r.value),
            empirical_cdf: format!("{:e}", (i + 1) as f64 / n),
            system: &table.system,
            power_control: &table.power_control,
            direction: &table.direction,
            seed: r.seed,
        })
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.into(), source })
}
