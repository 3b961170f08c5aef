//! Monte Carlo oracle for the closed-form SINRs.
//!
//! Channels, pilot noise, data symbols and receiver noise are sampled
//! directly from the system model, and the four terms of the received-signal
//! decomposition are estimated from their sample statistics:
//!
//! - `T1`, the coherent gain through the mean of `sum_m g_hat^* g`;
//! - `T2`, beamforming uncertainty, centered by a mean taken from a separate
//!   pilot pass so the main pass stays a plain running average;
//! - `T3`, interference and pilot contamination;
//! - `T4`, noise.
//!
//! Nothing here reads the closed-form statistics except `gamma` in the
//! moment report's target. Draws use the oracle RNG streams, which are
//! disjoint from every stream used to build the instance.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::chest::{ChannelBuffers, ChannelSampler, LmmseBank};
use crate::error::{invalid, mismatch, Result};
use crate::netgen::LargeScale;
use crate::perf::{DownlinkPower, UplinkPower};
use crate::pilots::PilotBook;
use crate::rng::{complex_normal, rng_for_chunk, SimRng, Stream};

const CHUNK: usize = 8192;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
}

impl McEstimate {
    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }

    /// `|mean - target| <= n_se * std_error`.
    pub fn within_se(&self, target: f64, n_se: f64) -> bool {
        (self.mean - target).abs() <= n_se * self.std_error
    }

    /// Agreement policy against a closed form: within 2% relative or four
    /// standard errors, whichever is looser.
    pub fn agrees_with(&self, closed_form: f64) -> bool {
        let tol = (0.02 * closed_form.abs()).max(4.0 * self.std_error);
        (self.mean - closed_form).abs() <= tol
    }

    pub fn relative_error(&self, target: f64) -> f64 {
        (self.mean - target).abs() / target.abs()
    }
}

/// Welford accumulator with Chan's parallel merge.
#[derive(Clone, Copy, Debug, Default)]
struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Self) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1) as f64
    }

    fn estimate(&self) -> McEstimate {
        McEstimate { mean: self.mean, std_error: (self.variance() / self.n as f64).sqrt(), n_samples: self.n }
    }
}

/// Bivariate Welford accumulator for a complex sample.
#[derive(Clone, Copy, Debug, Default)]
struct ComplexStats {
    n: u64,
    mean: Complex64,
    m_rr: f64,
    m_ii: f64,
    m_ri: f64,
}

impl ComplexStats {
    fn push(&mut self, z: Complex64) {
        self.n += 1;
        let d = z - self.mean;
        self.mean += d / self.n as f64;
        let e = z - self.mean;
        self.m_rr += d.re * e.re;
        self.m_ii += d.im * e.im;
        self.m_ri += d.re * e.im;
    }

    fn merge(&mut self, o: &Self) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let w = (self.n as f64) * (o.n as f64) / n as f64;
        self.mean += d * (o.n as f64 / n as f64);
        self.m_rr += o.m_rr + d.re * d.re * w;
        self.m_ii += o.m_ii + d.im * d.im * w;
        self.m_ri += o.m_ri + d.re * d.im * w;
        self.n = n;
    }

    /// Covariance of the sample mean's real and imaginary parts.
    fn mean_cov(&self) -> (f64, f64, f64) {
        let s = ((self.n - 1) * self.n) as f64;
        (self.m_rr / s, self.m_ii / s, self.m_ri / s)
    }

    /// `|E z|^2`, with the standard error of the first-order expansion along
    /// the direction of the mean.
    fn abs_sq(&self) -> McEstimate {
        let a = self.mean.norm();
        let (rr, ii, ri) = self.mean_cov();
        let (c, s) = if a > 0.0 { (self.mean.re / a, self.mean.im / a) } else { (1.0, 0.0) };
        let along = c * c * rr + s * s * ii + 2.0 * c * s * ri;
        McEstimate { mean: a * a, std_error: 2.0 * a * along.max(0.0).sqrt(), n_samples: self.n }
    }

    /// `|E z|` with the standard error `sqrt(E|z - mu|^2 / n)` of the complex mean.
    fn modulus(&self) -> McEstimate {
        let (rr, ii, _) = self.mean_cov();
        McEstimate { mean: self.mean.norm(), std_error: (rr + ii).sqrt(), n_samples: self.n }
    }
}

/// Estimated signal power and variances of the three impairment terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermEstimates {
    pub t1_sq: McEstimate,
    pub var_t2: McEstimate,
    pub var_t3: McEstimate,
    pub var_t4: McEstimate,
}

/// `|T1|^2 / (Var T2 + Var T3 + Var T4)` with first-order error propagation,
/// treating the four estimates as independent.
pub fn empirical_sinr(terms: &TermEstimates) -> McEstimate {
    let num = terms.t1_sq.mean;
    let den = terms.var_t2.mean + terms.var_t3.mean + terms.var_t4.mean;
    let den_se =
        (terms.var_t2.std_error.powi(2) + terms.var_t3.std_error.powi(2) + terms.var_t4.std_error.powi(2)).sqrt();
    let mean = num / den;
    let rel = ((terms.t1_sq.std_error / num).powi(2) + (den_se / den).powi(2)).sqrt();
    McEstimate { mean, std_error: mean * rel, n_samples: terms.t1_sq.n_samples }
}

#[derive(Clone, Default)]
struct UserAcc {
    x: ComplexStats,
    t2: RunningStats,
    t3: RunningStats,
    t4: RunningStats,
}

impl UserAcc {
    fn merge(&mut self, o: &Self) {
        self.x.merge(&o.x);
        self.t2.merge(&o.t2);
        self.t3.merge(&o.t3);
        self.t4.merge(&o.t4);
    }
}

fn check_instance(ls: &LargeScale, pilots: &PilotBook, bank: &LmmseBank, n_samples: usize) -> Result<()> {
    if n_samples < 2 {
        return Err(invalid("at least two Monte Carlo samples are needed"));
    }
    if bank.num_aps() != ls.num_aps() || bank.num_users() != ls.num_users() || pilots.num_users() != ls.num_users() {
        return Err(mismatch("bank, pilots and large-scale matrix disagree"));
    }
    Ok(())
}

/// Runs `n` draws split into chunks on `stream`, each chunk folding into its
/// own accumulator; chunks are merged in index order.
fn run_chunks<A: Send + Clone + Sync, S>(
    n: usize,
    seed: u64,
    stream: Stream,
    init: A,
    scratch: impl Fn() -> S + Sync,
    body: impl Fn(&mut SimRng, &mut A, &mut S) + Sync,
    merge: impl Fn(&mut A, &A),
) -> A {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for_chunk(seed, stream, c as u32);
            let mut acc = init.clone();
            let mut tmp = scratch();
            let len = CHUNK.min(n - c * CHUNK);
            for _ in 0..len {
                body(&mut rng, &mut acc, &mut tmp);
            }
            acc
        })
        .collect();
    let mut total = init;
    for p in &parts {
        merge(&mut total, p);
    }
    total
}

/// Index of `(m, k)` in the sampler's column-major buffers.
#[inline]
fn at(m_aps: usize, m: usize, k: usize) -> usize {
    k * m_aps + m
}

/// Per-user coherent sums `X_k`, shared by both directions.
/// `weight(m, k)` is 1 on the uplink and `sqrt(eta_mk)` on the downlink.
fn coherent_sums(buf: &ChannelBuffers, m_aps: usize, k_users: usize, weight: &[f64], out: &mut [Complex64]) {
    for k in 0..k_users {
        let mut x = Complex64::default();
        for m in 0..m_aps {
            let j = at(m_aps, m, k);
            x += buf.g_hat[j].conj() * buf.g[j] * weight[j];
        }
        out[k] = x;
    }
}

/// Mean of `X_k` from the centering stream.
fn centering_means(sampler: &ChannelSampler, m_aps: usize, k_users: usize, weight: &[f64], n: usize, seed: u64) -> Vec<Complex64> {
    let n_center = (n / 4).max(2);
    let acc = run_chunks(
        n_center,
        seed,
        Stream::OracleCentering,
        vec![ComplexStats::default(); k_users],
        || (sampler.buffers(), vec![Complex64::default(); k_users]),
        |rng, acc, (buf, x)| {
            sampler.draw(rng, buf);
            coherent_sums(buf, m_aps, k_users, weight, x);
            for (a, v) in acc.iter_mut().zip(x.iter()) {
                a.push(*v);
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(a, b)| a.merge(b)),
    );
    acc.iter().map(|s| s.mean).collect()
}

/// Term estimates for every user on the uplink.
#[allow(clippy::too_many_arguments)]
pub fn empirical_uplink_terms_all(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
    eta: &UplinkPower,
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<TermEstimates>> {
    check_instance(ls, pilots, bank, n_samples)?;
    if eta.len() != ls.num_users() {
        return Err(mismatch("power vector length"));
    }
    let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
    let sampler = ChannelSampler::new(ls, pilots, bank)?;
    let ones = vec![1.0; m_aps * k_users];
    let mu = centering_means(&sampler, m_aps, k_users, &ones, n_samples, rng_seed);
    let amp: Vec<f64> = eta.as_slice().iter().map(|e| (rho_u * e).sqrt()).collect();

    let acc = run_chunks(
        n_samples,
        rng_seed,
        Stream::Oracle,
        vec![UserAcc::default(); k_users],
        || (sampler.buffers(), vec![Complex64::default(); k_users], vec![Complex64::default(); m_aps]),
        |rng, acc, (buf, s, w)| {
            sampler.draw(rng, buf);
            s.iter_mut().for_each(|v| *v = complex_normal(rng));
            w.iter_mut().for_each(|v| *v = complex_normal(rng));
            for k in 0..k_users {
                // cross[i] = sum_m g_hat_mk^* g_mi
                let mut t3 = Complex64::default();
                let mut x = Complex64::default();
                for i in 0..k_users {
                    let mut c = Complex64::default();
                    for m in 0..m_aps {
                        c += buf.g_hat[at(m_aps, m, k)].conj() * buf.g[at(m_aps, m, i)];
                    }
                    if i == k {
                        x = c;
                    } else {
                        t3 += c * s[i] * amp[i];
                    }
                }
                let t4: Complex64 = (0..m_aps).map(|m| buf.g_hat[at(m_aps, m, k)].conj() * w[m]).sum();
                let t2 = s[k] * (x - mu[k]) * amp[k];
                let a = &mut acc[k];
                a.x.push(x);
                a.t2.push(t2.norm_sqr());
                a.t3.push(t3.norm_sqr());
                a.t4.push(t4.norm_sqr());
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(a, b)| a.merge(b)),
    );
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let t1 = a.x.abs_sq();
            let scale = amp[k] * amp[k];
            TermEstimates {
                t1_sq: McEstimate { mean: t1.mean * scale, std_error: t1.std_error * scale, n_samples: t1.n_samples },
                var_t2: a.t2.estimate(),
                var_t3: a.t3.estimate(),
                var_t4: a.t4.estimate(),
            }
        })
        .collect())
}

/// Term estimates for user `k` on the uplink.
#[allow(clippy::too_many_arguments)]
pub fn empirical_uplink_terms(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_u: f64,
    eta: &UplinkPower,
    k: usize,
    n_samples: usize,
    rng_seed: u64,
) -> Result<TermEstimates> {
    if k >= ls.num_users() {
        return Err(mismatch(format!("user {k} out of range")));
    }
    Ok(empirical_uplink_terms_all(ls, pilots, bank, rho_u, eta, n_samples, rng_seed)?[k])
}

/// Term estimates for every user on the downlink.
#[allow(clippy::too_many_arguments)]
pub fn empirical_downlink_terms_all(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_d: f64,
    eta: &DownlinkPower,
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<TermEstimates>> {
    check_instance(ls, pilots, bank, n_samples)?;
    if eta.matrix().shape() != ls.beta().shape() {
        return Err(mismatch("downlink power matrix shape"));
    }
    let (m_aps, k_users) = (ls.num_aps(), ls.num_users());
    let sampler = ChannelSampler::new(ls, pilots, bank)?;
    let root: Vec<f64> = eta.matrix().iter().map(|e| e.sqrt()).collect();
    let mu = centering_means(&sampler, m_aps, k_users, &root, n_samples, rng_seed);
    let amp = rho_d.sqrt();

    let acc = run_chunks(
        n_samples,
        rng_seed,
        Stream::Oracle,
        vec![UserAcc::default(); k_users],
        || (sampler.buffers(), vec![Complex64::default(); k_users], vec![Complex64::default(); k_users]),
        |rng, acc, (buf, s, w)| {
            sampler.draw(rng, buf);
            s.iter_mut().for_each(|v| *v = complex_normal(rng));
            w.iter_mut().for_each(|v| *v = complex_normal(rng));
            for k in 0..k_users {
                // beam[i] = sum_m sqrt(eta_mi) g_hat_mi^* g_mk
                let mut t3 = Complex64::default();
                let mut x = Complex64::default();
                for i in 0..k_users {
                    let mut c = Complex64::default();
                    for m in 0..m_aps {
                        let j = at(m_aps, m, i);
                        c += buf.g_hat[j].conj() * buf.g[at(m_aps, m, k)] * root[j];
                    }
                    if i == k {
                        x = c;
                    } else {
                        t3 += c * s[i];
                    }
                }
                let t2 = s[k] * (x - mu[k]) * amp;
                let a = &mut acc[k];
                a.x.push(x);
                a.t2.push(t2.norm_sqr());
                a.t3.push((t3 * amp).norm_sqr());
                a.t4.push(w[k].norm_sqr());
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(a, b)| a.merge(b)),
    );
    Ok(acc
        .iter()
        .map(|a| {
            let t1 = a.x.abs_sq();
            let scale = rho_d;
            TermEstimates {
                t1_sq: McEstimate { mean: t1.mean * scale, std_error: t1.std_error * scale, n_samples: t1.n_samples },
                var_t2: a.t2.estimate(),
                var_t3: a.t3.estimate(),
                var_t4: a.t4.estimate(),
            }
        })
        .collect())
}

/// Term estimates for user `k` on the downlink.
#[allow(clippy::too_many_arguments)]
pub fn empirical_downlink_terms(
    ls: &LargeScale,
    pilots: &PilotBook,
    bank: &LmmseBank,
    rho_d: f64,
    eta: &DownlinkPower,
    k: usize,
    n_samples: usize,
    rng_seed: u64,
) -> Result<TermEstimates> {
    if k >= ls.num_users() {
        return Err(mismatch(format!("user {k} out of range")));
    }
    Ok(empirical_downlink_terms_all(ls, pilots, bank, rho_d, eta, n_samples, rng_seed)?[k])
}

/// Which entries the moment report examines: estimates at APs `m` and `n`
/// (`m != n`) for user `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MomentQuery {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

/// Sample moments of the estimates for one query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub query: MomentQuery,
    /// `|E[g_hat_mk conj(g_tilde_mk)]|`, expected 0.
    pub estimate_error_corr: McEstimate,
    /// `|E[g_hat_mk conj(g_hat_nk)]|`, expected 0.
    pub cross_ap_corr: McEstimate,
    /// `E|g_hat_mk|^4`, expected `2 gamma_mk^2`.
    pub fourth_moment: McEstimate,
    pub fourth_moment_target: f64,
}

impl MomentReport {
    /// Orthogonality and cross-AP checks within `n_se` standard errors and
    /// the fourth moment within `rel` of its target.
    pub fn passes(&self, n_se: f64, rel: f64) -> bool {
        self.estimate_error_corr.within_se(0.0, n_se)
            && self.cross_ap_corr.within_se(0.0, n_se)
            && self.fourth_moment.relative_error(self.fourth_moment_target) <= rel
    }
}

/// Estimates the orthogonality, cross-AP and fourth-moment properties of the
/// channel estimates.
pub fn moment_checks(
    bank: &LmmseBank,
    ls: &LargeScale,
    pilots: &PilotBook,
    rho_p: f64,
    queries: &[MomentQuery],
    n_samples: usize,
    rng_seed: u64,
) -> Result<Vec<MomentReport>> {
    check_instance(ls, pilots, bank, n_samples)?;
    if (rho_p - bank.rho_p()).abs() > 1e-12 * rho_p.abs() {
        return Err(mismatch("pilot power differs from the one the bank was built with"));
    }
    let m_aps = ls.num_aps();
    for q in queries {
        if q.m >= m_aps || q.n >= m_aps || q.m == q.n || q.k >= ls.num_users() {
            return Err(invalid(format!("bad moment query {q:?}")));
        }
    }
    let sampler = ChannelSampler::new(ls, pilots, bank)?;
    let init = vec![(ComplexStats::default(), ComplexStats::default(), RunningStats::default()); queries.len()];
    let acc = run_chunks(
        n_samples,
        rng_seed,
        Stream::Oracle,
        init,
        || sampler.buffers(),
        |rng, acc, buf| {
            sampler.draw(rng, buf);
            for (q, a) in queries.iter().zip(acc.iter_mut()) {
                let (i, j) = (at(m_aps, q.m, q.k), at(m_aps, q.n, q.k));
                let gh = buf.g_hat[i];
                let err = buf.g[i] - gh;
                a.0.push(gh * err.conj());
                a.1.push(gh * buf.g_hat[j].conj());
                a.2.push(gh.norm_sqr().powi(2));
            }
        },
        |a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0.merge(&y.0);
                x.1.merge(&y.1);
                x.2.merge(&y.2);
            }
        },
    );
    Ok(queries
        .iter()
        .zip(&acc)
        .map(|(q, a)| MomentReport {
            query: *q,
            estimate_error_corr: a.0.modulus(),
            cross_ap_corr: a.1.modulus(),
            fourth_moment: a.2.estimate(),
            fourth_moment_target: 2.0 * bank.gamma()[(q.m, q.k)].powi(2),
        })
        .collect())
}

/// One closed-form versus Monte Carlo comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationLine {
    pub label: String,
    pub closed_form: f64,
    pub estimate: McEstimate,
    pub pass: bool,
}

/// Structured text report consumed by the test suite and the CLI.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub lines: Vec<ValidationLine>,
}

impl ValidationReport {
    pub fn push(&mut self, label: impl Into<String>, closed_form: f64, estimate: McEstimate) {
        let pass = estimate.agrees_with(closed_form);
        self.push_with(label, closed_form, estimate, pass);
    }

    /// Adds a line judged by a caller-supplied criterion.
    pub fn push_with(&mut self, label: impl Into<String>, closed_form: f64, estimate: McEstimate, pass: bool) {
        self.lines.push(ValidationLine { label: label.into(), closed_form, estimate, pass });
    }

    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            let rel = if l.closed_form != 0.0 {
                format!("{:.3e}", l.estimate.relative_error(l.closed_form))
            } else {
                "-".to_string()
            };
            writeln!(
                f,
                "{} {:<32} closed={:.6e} mc={:.6e} se={:.2e} rel={rel} n={}",
                if l.pass { "PASS" } else { "FAIL" },
                l.label,
                l.closed_form,
                l.estimate.mean,
                l.estimate.std_error,
                l.estimate.n_samples
            )?;
        }
        Ok(())
    }
}
