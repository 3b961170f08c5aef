//! Closed-form performance: cell-free uplink/downlink SINR, the small-cell
//! baseline, throughput and energy efficiency.

mod downlink;
mod linear;
mod smallcell;
mod uplink;

pub use downlink::{
    downlink_sinr_all, downlink_sinr_cf, downlink_sinr_collocated, downlink_sinr_orthonormal, DownlinkPower,
};
pub use linear::LinearSinrModel;
pub use smallcell::{
    assign_serving_aps, smallcell_downlink_model, smallcell_downlink_rate, smallcell_uplink_model,
    smallcell_uplink_rate, SmallCellAssignment,
};
pub use uplink::{
    uplink_model, uplink_sinr_all, uplink_sinr_cf, uplink_sinr_collocated, uplink_sinr_orthonormal, UplinkPower,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `log2(1 + sinr)` for each entry.
pub fn rate_bits(sinr: &[f64]) -> Vec<f64> {
    sinr.iter().map(|s| s.ln_1p() / std::f64::consts::LN_2).collect()
}

/// Net throughput in bits/s: `B (1 - tau_ov/tau_c) / 2 * rate`.
///
/// `tau_overhead` is the pilot length for cell-free and `tau_u + tau_d` for
/// small cells.
pub fn throughput(rate_bits: f64, bandwidth_hz: f64, tau_overhead: f64, tau_c: f64) -> Result<f64> {
    if !(tau_c > 0.0) || !(0.0..tau_c).contains(&tau_overhead) {
        return Err(invalid(format!(
            "training overhead {tau_overhead} must lie in [0, tau_c = {tau_c})"
        )));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    Ok(bandwidth_hz * (1.0 - tau_overhead / tau_c) / 2.0 * rate_bits)
}

/// Uplink energy efficiency `sum R_k / (P_u sum eta_k)`.
///
/// Rates are whatever unit the caller chooses (bits/s/Hz gives bits/J per Hz,
/// throughputs give bits/J).
pub fn energy_efficiency(rates: &[f64], eta: &UplinkPower, p_u_w: f64) -> Result<f64> {
    if rates.len() != eta.len() {
        return Err(crate::error::mismatch(format!("{} rates for {} users", rates.len(), eta.len())));
    }
    let total: f64 = eta.as_slice().iter().sum();
    if !(total > 0.0) {
        return Err(invalid("energy efficiency needs a nonzero power allocation"));
    }
    if !(p_u_w > 0.0) {
        return Err(invalid(format!("maximum uplink power must be positive, got {p_u_w}")));
    }
    Ok(rates.iter().sum::<f64>() / (p_u_w * total))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    CellfreeLmmse,
    CellfreeSuboptimal,
    Smallcell,
}

impl SystemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CellfreeLmmse => "cellfree_lmmse",
            Self::CellfreeSuboptimal => "cellfree_suboptimal",
            Self::Smallcell => "smallcell",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uplink => "uplink",
            Self::Downlink => "downlink",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportMeta {
    pub tag: String,
    pub seed: u64,
    pub system: SystemKind,
    pub direction: Direction,
}

/// Per-user figures of merit for one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct PerfReport {
    /// Linear SINR; for small cells the effective `omega` / `mu`.
    pub sinr: Vec<f64>,
    pub rate_bits: Vec<f64>,
    pub throughput: Vec<f64>,
    /// Uplink only.
    pub energy_eff: Option<f64>,
    pub meta: ReportMeta,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput(1.0, 20e6, 0.0, 200.0).unwrap(), 10e6);
        assert!((throughput(1.0, 20e6, 60.0, 200.0).unwrap() - 7.0e6).abs() < 1e-6);
        assert!(throughput(1.0, 20e6, 200.0, 200.0).is_err());
        assert!(throughput(1.0, 20e6, -1.0, 200.0).is_err());
    }

    #[test]
    fn energy_efficiency_examples() {
        let one = UplinkPower::new(vec![1.0]).unwrap();
        assert!((energy_efficiency(&[1.0], &one, 0.02).unwrap() - 50.0).abs() < 1e-12);
        let full = UplinkPower::new(vec![1.0, 0.8]).unwrap();
        let half = UplinkPower::new(vec![0.5, 0.4]).unwrap();
        let a = energy_efficiency(&[2.0, 3.0], &full, 0.2).unwrap();
        let b = energy_efficiency(&[2.0, 3.0], &half, 0.2).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        let zero = UplinkPower::new(vec![0.0, 0.0]).unwrap();
        assert!(energy_efficiency(&[1.0, 1.0], &zero, 0.2).is_err());
    }

    #[test]
    fn rate_of_zero_sinr() {
        assert_eq!(rate_bits(&[0.0, 1.0, 3.0]), vec![0.0, 1.0, 2.0]);
    }
}
