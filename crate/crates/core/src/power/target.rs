//! Distributed target-SINR power control and the user-dropping wrapper.
//!
//! Each user updates its own coefficient from its current SINR:
//!
//! ```text
//! eta_k <- eta_k delta_k / SINR_k                     if eta_k / SINR_k <= 1 / delta_k
//! eta_k <- min(1, (rho_u / delta_k) SINR_k / eta_k)   otherwise
//! ```
//!
//! starting from `eta = 1`. The second branch is the published rule as
//! stated; note that `rho_u` is a noise-normalized power, so for realistic
//! link budgets it saturates at 1.

use super::linear::linear_maxmin;
use super::BisectionSpec;
use crate::error::{invalid, Error, Result};
use crate::perf::LinearSinrModel;

/// Targets and stopping rule. `drop_fraction` is only read by
/// [`drop_and_retarget`].
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpec {
    pub delta: Vec<f64>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub drop_fraction: f64,
}

impl TargetSpec {
    pub fn uniform(delta: f64, k: usize) -> Self {
        Self { delta: vec![delta; k], ..Self::default() }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.delta.len() != k {
            return Err(crate::error::mismatch(format!("{} targets for {k} users", self.delta.len())));
        }
        if self.delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(invalid("SINR targets must be positive and finite"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return Err(invalid(format!("drop fraction {} outside [0, 1)", self.drop_fraction)));
        }
        Ok(())
    }
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self { delta: Vec::new(), epsilon: 1e-4, max_iters: 500, drop_fraction: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetOutcome {
    pub eta: Vec<f64>,
    /// Every `|SINR_k - delta_k| < epsilon`.
    pub converged: bool,
    pub sinr: Vec<f64>,
    pub iterations: usize,
}

/// Runs the target-SINR iteration. Never fails on unreachable targets; the
/// `converged` flag reports them.
pub fn target_sinr_iterate(model: &LinearSinrModel, rho_u: f64, spec: &TargetSpec) -> Result<TargetOutcome> {
    let k = model.num_users();
    spec.validate(k)?;
    let mut eta = vec![1.0; k];
    let mut iterations = 0;
    loop {
        let sinr = model.sinr(&eta)?;
        let converged = sinr.iter().zip(&spec.delta).all(|(s, d)| (s - d).abs() < spec.epsilon);
        if converged || iterations >= spec.max_iters {
            return Ok(TargetOutcome { eta, converged, sinr, iterations });
        }
        iterations += 1;
        // eta_k / SINR_k, written without the division so eta_k = 0 is safe.
        let ratio = model.interference(&eta)?;
        for u in 0..k {
            let d = spec.delta[u];
            eta[u] = if ratio[u] <= 1.0 / d { d * ratio[u] } else { (rho_u / d / ratio[u]).min(1.0) };
            eta[u] = eta[u].clamp(0.0, 1.0);
        }
    }
}

/// Result of [`drop_and_retarget`]. Dropped users have `eta = 0` and SINR 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DropOutcome {
    /// Surviving users, ascending.
    pub active: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Common target reached by the survivors.
    pub delta: f64,
    pub eta: Vec<f64>,
    pub sinr: Vec<f64>,
    pub converged: bool,
}

/// Number of users kept: `ceil((1 - f) K)`.
pub fn users_kept(k: usize, drop_fraction: f64) -> usize {
    k - ((drop_fraction * k as f64 + 1e-9).floor() as usize).min(k)
}

const MAX_BRACKET_STEPS: usize = 200;

/// Raises a common target until only `ceil((1 - f) K)` users can reach it,
/// drops the rest and reruns the iteration on the survivors.
///
/// A user reaches `delta` when its SINR after the iteration is at least
/// `delta - epsilon`. The search starts from the max-min value, which every
/// user can reach.
pub fn drop_and_retarget(
    model: &LinearSinrModel,
    rho_u: f64,
    spec: &TargetSpec,
    bisection: &BisectionSpec,
) -> Result<DropOutcome> {
    let k = model.num_users();
    let keep = users_kept(k, spec.drop_fraction);
    let with_delta = |delta: f64| TargetSpec { delta: vec![delta; k], ..spec.clone() };
    with_delta(1.0).validate(k)?;
    let reached = |delta: f64| -> Result<(usize, TargetOutcome)> {
        let out = target_sinr_iterate(model, rho_u, &with_delta(delta))?;
        let n = out.sinr.iter().filter(|s| **s >= delta - spec.epsilon).count();
        Ok((n, out))
    };

    let t_star = linear_maxmin(model, bisection)?.t_star;
    let mut lo = t_star * (1.0 - bisection.rel_tol);
    let mut lo_out = None;
    for _ in 0..MAX_BRACKET_STEPS {
        let (n, out) = reached(lo)?;
        if n >= keep {
            lo_out = Some(out);
            break;
        }
        lo *= 0.5;
    }
    let mut lo_out = lo_out.ok_or_else(|| Error::BracketFailure("no reachable common target".into()))?;
    let mut hi = 2.0 * lo;
    let mut bracketed = false;
    for _ in 0..MAX_BRACKET_STEPS {
        let (n, out) = reached(hi)?;
        if n < keep {
            bracketed = true;
            break;
        }
        lo = hi;
        lo_out = out;
        hi *= 2.0;
    }
    if !bracketed {
        return Err(Error::BracketFailure("every target up to the search cap is reachable".into()));
    }
    for _ in 0..bisection.max_iters {
        if hi - lo <= bisection.rel_tol * lo {
            break;
        }
        let mid = (lo * hi).sqrt();
        let (n, out) = reached(mid)?;
        if n >= keep {
            lo = mid;
            lo_out = out;
        } else {
            hi = mid;
        }
    }

    // Users that reached the target, then trim the most power-hungry extras.
    let mut ok: Vec<usize> = (0..k).filter(|&u| lo_out.sinr[u] >= lo - spec.epsilon).collect();
    ok.sort_by(|&a, &b| lo_out.eta[a].total_cmp(&lo_out.eta[b]).then(a.cmp(&b)));
    ok.truncate(keep);
    ok.sort_unstable();
    let dropped: Vec<usize> = (0..k).filter(|u| ok.binary_search(u).is_err()).collect();

    let sub = model.restrict(&ok);
    let out = target_sinr_iterate(&sub, rho_u, &TargetSpec { delta: vec![lo; ok.len()], ..spec.clone() })?;
    let mut eta = vec![0.0; k];
    let mut sinr = vec![0.0; k];
    for (j, &u) in ok.iter().enumerate() {
        eta[u] = out.eta[j];
        sinr[u] = out.sinr[j];
    }
    Ok(DropOutcome { active: ok, dropped, delta: lo, eta, sinr, converged: out.converged })
}
