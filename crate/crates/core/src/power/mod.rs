//! Power control: max-min by bisection over feasibility oracles, the
//! distributed target-SINR iteration, and the downlink cone program.
//!
//! Every max-min solver follows the same pattern. A feasibility oracle decides
//! whether a common SINR target `t` is reachable and returns a witness power
//! allocation when it is. Bisection narrows `[t_lo, t_hi]` until the gap and
//! the spread of the normalized witness are both below `rel_tol`.

mod cone;
mod linear;
mod target;

pub use cone::{build_cone_problem, downlink_feasible, downlink_maxmin, ConeProblem, CONE_CERT_TOL};
pub use linear::{linear_feasible, linear_maxmin, smallcell_maxmin, uplink_feasible, uplink_maxmin};
pub use target::{drop_and_retarget, target_sinr_iterate, users_kept, DropOutcome, TargetOutcome, TargetSpec};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility<W> {
    Feasible(W),
    Infeasible,
}

impl<W> Feasibility<W> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }

    pub fn witness(self) -> Option<W> {
        match self {
            Self::Feasible(w) => Some(w),
            Self::Infeasible => None,
        }
    }
}

/// Bisection controls. Missing bracket ends are found automatically: the
/// lower end is the worst SINR at full power, the upper end doubles until
/// infeasible.
#[derive(Clone, Debug, PartialEq)]
pub struct BisectionSpec {
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for BisectionSpec {
    fn default() -> Self {
        Self { t_lo: None, t_hi: None, rel_tol: 1e-3, max_iters: 60 }
    }
}

impl BisectionSpec {
    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidInput(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if let (Some(lo), Some(hi)) = (self.t_lo, self.t_hi) {
            if !(0.0 <= lo && lo < hi) {
                return Err(Error::BracketFailure(format!("need 0 <= t_lo < t_hi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Result of a max-min solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxMinOutcome<P> {
    /// Power allocation normalized so that a box or AP constraint is tight.
    pub power: P,
    /// Worst SINR achieved by `power`.
    pub t_star: f64,
    /// Per-user SINR under `power`.
    pub sinr: Vec<f64>,
    /// Final bracket: `t_lo` certified feasible, `t_hi` certified infeasible.
    pub t_lo: f64,
    pub t_hi: f64,
    pub iterations: usize,
}

const MAX_DOUBLINGS: usize = 200;

/// Generic driver.
///
/// `feasible(t)` is the oracle; `normalize(w)` scales a witness to the
/// boundary of the power set and returns it with its per-user SINRs.
/// `full` is the full-power allocation and its SINRs, used for bracketing.
pub(crate) fn bisect<W: Clone>(
    spec: &BisectionSpec,
    full: (W, Vec<f64>),
    mut feasible: impl FnMut(f64) -> Result<Feasibility<W>>,
    normalize: impl Fn(W) -> Result<(W, Vec<f64>)>,
) -> Result<MaxMinOutcome<W>> {
    spec.validate()?;
    let min_of = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);

    let (mut lo, mut witness) = match spec.t_lo {
        Some(t) => match feasible(t)? {
            Feasibility::Feasible(w) => (t, w),
            Feasibility::Infeasible => return Err(Error::BracketFailure(format!("t_lo = {t} is infeasible"))),
        },
        None => {
            let t = min_of(&full.1);
            if !(t > 0.0) {
                return Err(Error::BracketFailure("worst SINR at full power is zero".into()));
            }
            (t, full.0)
        }
    };
    let mut hi = match spec.t_hi {
        Some(t) => {
            if feasible(t)?.is_feasible() {
                return Err(Error::BracketFailure(format!("t_hi = {t} is feasible")));
            }
            t
        }
        None => {
            let mut t = 2.0 * lo.max(f64::MIN_POSITIVE);
            let mut found = false;
            for _ in 0..MAX_DOUBLINGS {
                match feasible(t)? {
                    Feasibility::Feasible(w) => {
                        lo = t;
                        witness = w;
                        t *= 2.0;
                    }
                    Feasibility::Infeasible => {
                        found = true;
                        break;
                    }
                }
            }
            if !found {
                return Err(Error::BracketFailure("no infeasible upper bound found".into()));
            }
            t
        }
    };

    let mut best = normalize(witness)?;
    let mut iterations = 0;
    loop {
        let t_star = min_of(&best.1);
        let spread = best.1.iter().copied().fold(f64::NEG_INFINITY, f64::max) - t_star;
        // Half the tolerance on the gap leaves room for oracle slack when
        // certifying t*(1 +- rel_tol).
        if hi - lo <= 0.5 * spec.rel_tol * lo && spread <= spec.rel_tol * t_star {
            return Ok(MaxMinOutcome { power: best.0, t_star, sinr: best.1, t_lo: lo, t_hi: hi, iterations });
        }
        if iterations >= spec.max_iters {
            return Err(Error::IterationCap { solver: "bisection", cap: spec.max_iters });
        }
        iterations += 1;
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        match feasible(mid)? {
            Feasibility::Feasible(w) => {
                lo = mid;
                best = normalize(w)?;
            }
            Feasibility::Infeasible => hi = mid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_on_a_scalar_threshold() {
        let threshold = 3.7;
        let out = bisect(
            &BisectionSpec::default(),
            (1.0, vec![1.0]),
            |t| Ok(if t <= threshold { Feasibility::Feasible(t) } else { Feasibility::Infeasible }),
            |w| Ok((w, vec![w])),
        )
        .unwrap();
        assert!(out.t_star <= threshold && out.t_star * (1.0 + 1e-3) > threshold);
        assert!(out.t_lo <= threshold && out.t_hi > threshold);
    }

    #[test]
    fn explicit_bracket_is_checked() {
        let spec = BisectionSpec { t_lo: Some(5.0), t_hi: Some(6.0), ..Default::default() };
        let r = bisect(
            &spec,
            (1.0, vec![1.0]),
            |t| Ok(if t <= 2.0 { Feasibility::Feasible(t) } else { Feasibility::Infeasible }),
            |w| Ok((w, vec![w])),
        );
        assert!(matches!(r, Err(Error::BracketFailure(_))));
        let spec = BisectionSpec { t_lo: Some(3.0), t_hi: Some(1.0), ..Default::default() };
        assert!(spec.validate().is_err());
    }
}
