//! SINR maps that are linear-fractional in a power vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{mismatch, Result};

/// `SINR_k(eta) = eta_k s_k / (c_k + eta_k d_k + sum_{i != k} X_ki eta_i)`.
///
/// Cell-free uplink, small-cell uplink and small-cell downlink all have this
/// shape, which makes their feasibility problems linear at fixed target.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSinrModel {
    /// `s_k`
    pub signal: DVector<f64>,
    /// `c_k`, the power-independent noise term.
    pub noise: DVector<f64>,
    /// `d_k`, the user's own non-coherent term.
    pub self_interference: DVector<f64>,
    /// `X_ki`; the diagonal is ignored.
    pub cross: DMatrix<f64>,
}

impl LinearSinrModel {
    pub fn num_users(&self) -> usize {
        self.signal.len()
    }

    fn check(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.num_users() {
            return Err(mismatch(format!("{} powers for {} users", eta.len(), self.num_users())));
        }
        Ok(())
    }

    /// `c_k + eta_k d_k + sum_{i != k} X_ki eta_i`.
    pub fn denominator(&self, eta: &[f64], k: usize) -> f64 {
        let cross: f64 = (0..eta.len()).filter(|&i| i != k).map(|i| self.cross[(k, i)] * eta[i]).sum();
        self.noise[k] + eta[k] * self.self_interference[k] + cross
    }

    pub fn sinr_one(&self, eta: &[f64], k: usize) -> f64 {
        eta[k] * self.signal[k] / self.denominator(eta, k)
    }

    pub fn sinr(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        Ok((0..eta.len()).map(|k| self.sinr_one(eta, k)).collect())
    }

    /// Interference function `I_k(eta) = eta_k / SINR_k(eta)`, which does not
    /// depend on `eta_k` through the numerator.
    pub fn interference(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.check(eta)?;
        Ok((0..eta.len()).map(|k| self.denominator(eta, k) / self.signal[k]).collect())
    }

    /// Model restricted to the given users, in the given order.
    pub fn restrict(&self, active: &[usize]) -> Self {
        let n = active.len();
        Self {
            signal: DVector::from_fn(n, |i, _| self.signal[active[i]]),
            noise: DVector::from_fn(n, |i, _| self.noise[active[i]]),
            self_interference: DVector::from_fn(n, |i, _| self.self_interference[active[i]]),
            cross: DMatrix::from_fn(n, n, |i, j| self.cross[(active[i], active[j])]),
        }
    }
}
