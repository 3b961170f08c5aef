//! Network geometry and large-scale channel statistics.
//!
//! APs and users are dropped uniformly on a `D x D` square whose edges are
//! wrapped (toroidal min-image metric). Large-scale fading combines the
//! three-slope path-loss model with log-normal shadowing that is either
//! i.i.d. or spatially correlated through a two-component model
//! `z_mk = sqrt(delta) a_m + sqrt(1 - delta) b_k`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{rng_for, standard_normal, uniform, Stream};

/// Boltzmann constant used for the thermal noise floor (J/K).
pub const BOLTZMANN_J_PER_K: f64 = 1.381e-23;

/// Diagonal loading applied before taking a covariance square root.
const COVARIANCE_JITTER: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    area_side_m: f64,
    ap_positions: Vec<Point>,
    user_positions: Vec<Point>,
}

impl Geometry {
    pub fn new(area_side_m: f64, ap_positions: Vec<Point>, user_positions: Vec<Point>) -> Result<Self> {
        if !(area_side_m > 0.0 && area_side_m.is_finite()) {
            return Err(invalid(format!("area side must be positive, got {area_side_m}")));
        }
        if ap_positions.is_empty() || user_positions.is_empty() {
            return Err(invalid("need at least one AP and one user"));
        }
        let inside = |p: &Point| (0.0..area_side_m).contains(&p.x) && (0.0..area_side_m).contains(&p.y);
        if !ap_positions.iter().chain(&user_positions).all(inside) {
            return Err(invalid(format!("positions must lie in [0, {area_side_m})^2")));
        }
        Ok(Self { area_side_m, ap_positions, user_positions })
    }

    pub fn area_side_m(&self) -> f64 {
        self.area_side_m
    }

    pub fn ap_positions(&self) -> &[Point] {
        &self.ap_positions
    }

    pub fn user_positions(&self) -> &[Point] {
        &self.user_positions
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }

    /// M x K matrix of wrapped AP-user distances.
    pub fn ap_user_distances(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_aps(), self.num_users(), |m, k| {
            wrap_distance(self.ap_positions[m], self.user_positions[k], self.area_side_m)
        })
    }
}

/// Propagation and receiver parameters. Defaults are the 1.9 GHz urban
/// micro settings used throughout the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationParams {
    pub carrier_freq_mhz: f64,
    pub ap_height_m: f64,
    pub user_height_m: f64,
    pub sigma_sh_db: f64,
    pub d0_m: f64,
    pub d1_m: f64,
    pub d_decorr_m: f64,
    /// Weight of the AP component in correlated shadowing.
    pub delta_mix: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub noise_temp_k: f64,
    /// Distances are divided by this before entering the logarithms of the
    /// path-loss model. 1000 means the model is evaluated in kilometres.
    pub log_distance_unit_m: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            carrier_freq_mhz: 1900.0,
            ap_height_m: 15.0,
            user_height_m: 1.65,
            sigma_sh_db: 8.0,
            d0_m: 10.0,
            d1_m: 50.0,
            d_decorr_m: 20.0,
            delta_mix: 0.5,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            noise_temp_k: 290.0,
            log_distance_unit_m: 1000.0,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_mhz", self.carrier_freq_mhz),
            ("ap_height_m", self.ap_height_m),
            ("user_height_m", self.user_height_m),
            ("d0_m", self.d0_m),
            ("d_decorr_m", self.d_decorr_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_temp_k", self.noise_temp_k),
            ("log_distance_unit_m", self.log_distance_unit_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.d1_m > self.d0_m) {
            return Err(invalid("need 0 < d0 < d1"));
        }
        if !(0.0..=1.0).contains(&self.delta_mix) {
            return Err(invalid(format!("delta_mix must be in [0, 1], got {}", self.delta_mix)));
        }
        if !(self.sigma_sh_db >= 0.0) {
            return Err(invalid("sigma_sh_db must be nonnegative"));
        }
        Ok(())
    }

    /// The frequency/height offset `L` of the path-loss model, in dB.
    pub fn path_loss_offset_db(&self) -> Result<f64> {
        let f = self.carrier_freq_mhz;
        if !(f > 0.0) || !(self.ap_height_m > 0.0) || !(self.user_height_m > 0.0) {
            return Err(invalid("frequency and antenna heights must be positive"));
        }
        let lf = f.log10();
        Ok(46.3 + 33.9 * lf - 13.82 * self.ap_height_m.log10() - (1.1 * lf - 0.7) * self.user_height_m
            + (1.56 * lf - 0.8))
    }
}

/// Shadow-fading model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowingMode {
    Correlated,
    Uncorrelated,
}

/// Large-scale fading of one network realization.
#[derive(Clone, Debug, PartialEq)]
pub struct LargeScale {
    beta: DMatrix<f64>,
    shadow_z: DMatrix<f64>,
}

impl LargeScale {
    pub fn new(beta: DMatrix<f64>, shadow_z: DMatrix<f64>) -> Result<Self> {
        if beta.shape() != shadow_z.shape() {
            return Err(Error::DimensionMismatch("beta and shadow field differ in shape".into()));
        }
        if beta.nrows() == 0 || beta.ncols() == 0 {
            return Err(invalid("empty large-scale matrix"));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("large-scale fading"));
        }
        if beta.iter().any(|&b| b <= 0.0) {
            return Err(invalid("large-scale fading coefficients must be positive"));
        }
        Ok(Self { beta, shadow_z })
    }

    /// Wraps an externally supplied beta matrix (no shadow field).
    pub fn from_beta(beta: DMatrix<f64>) -> Result<Self> {
        let z = DMatrix::zeros(beta.nrows(), beta.ncols());
        Self::new(beta, z)
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn shadow_z(&self) -> &DMatrix<f64> {
        &self.shadow_z
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }
}

/// Noise-normalized transmit powers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBudget {
    pub rho_p: f64,
    pub rho_u: f64,
    pub rho_d: f64,
    pub pilot_w: f64,
    pub uplink_w: f64,
    pub downlink_w: f64,
    pub noise_power_w: f64,
}

impl PowerBudget {
    pub fn from_watts(pilot_w: f64, uplink_w: f64, downlink_w: f64, noise_power_w: f64) -> Result<Self> {
        for (name, v) in [
            ("pilot power", pilot_w),
            ("uplink power", uplink_w),
            ("downlink power", downlink_w),
            ("noise power", noise_power_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            rho_p: pilot_w / noise_power_w,
            rho_u: uplink_w / noise_power_w,
            rho_d: downlink_w / noise_power_w,
            pilot_w,
            uplink_w,
            downlink_w,
            noise_power_w,
        })
    }
}

/// Drops `m` APs and `k` users i.i.d. uniformly on the square.
pub fn place_network(m: usize, k: usize, area_side_m: f64, rng_seed: u64) -> Result<Geometry> {
    if m == 0 || k == 0 {
        return Err(invalid("AP and user counts must be at least 1"));
    }
    if !(area_side_m > 0.0 && area_side_m.is_finite()) {
        return Err(invalid(format!("area side must be positive, got {area_side_m}")));
    }
    let mut rng = rng_for(rng_seed, Stream::Geometry);
    let mut draw = |n: usize| -> Vec<Point> {
        (0..n)
            .map(|_| {
                let x = uniform(&mut rng, area_side_m);
                let y = uniform(&mut rng, area_side_m);
                Point::new(x, y)
            })
            .collect()
    };
    let aps = draw(m);
    let users = draw(k);
    Geometry::new(area_side_m, aps, users)
}

/// Min-image distance on the `D x D` torus.
pub fn wrap_distance(p: Point, q: Point, area_side_m: f64) -> f64 {
    let axis = |a: f64, b: f64| {
        let d = (a - b).abs() % area_side_m;
        d.min(area_side_m - d)
    };
    axis(p.x, q.x).hypot(axis(p.y, q.y))
}

/// Three-slope path loss in dB (a negative number: a gain).
///
/// The model is evaluated as printed, including the 34 dB/decade outer
/// slope. Since the middle branch ends at 35 dB/decade the curve is
/// discontinuous at `d1` by `log10(d1 / unit)` dB.
pub fn path_loss_db(d_m: f64, params: &PropagationParams) -> Result<f64> {
    if !(d_m >= 0.0) || !d_m.is_finite() {
        return Err(invalid(format!("distance must be nonnegative, got {d_m}")));
    }
    let l = params.path_loss_offset_db()?;
    let unit = params.log_distance_unit_m;
    let (d, d0, d1) = (d_m / unit, params.d0_m / unit, params.d1_m / unit);
    Ok(if d > d1 {
        -l - 34.0 * d.log10()
    } else if d > d0 {
        -l - 15.0 * d1.log10() - 20.0 * d.log10()
    } else {
        -l - 15.0 * d1.log10() - 20.0 * d0.log10()
    })
}

/// Thermal noise power `B k_B T0 NF` in watts.
pub fn noise_power_w(params: &PropagationParams) -> f64 {
    params.bandwidth_hz * BOLTZMANN_J_PER_K * params.noise_temp_k * 10f64.powf(params.noise_figure_db / 10.0)
}

/// Symmetric square root of the distance-decay covariance
/// `C_ij = 2^(-d_ij / d_decorr)` of a set of points.
fn decay_covariance_sqrt(points: &[Point], area_side_m: f64, d_decorr_m: f64) -> Result<DMatrix<f64>> {
    let n = points.len();
    let mut cov = DMatrix::from_fn(n, n, |i, j| {
        let d = wrap_distance(points[i], points[j], area_side_m);
        2f64.powf(-d / d_decorr_m)
    });
    for i in 0..n {
        cov[(i, i)] += COVARIANCE_JITTER;
    }
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    // Toroidal distances make the exponential kernel only approximately PSD;
    // small negative eigenvalues are clipped, gross violations rejected.
    if min_ev < -1e-6 * max_ev.max(1.0) * n as f64 {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_ev });
    }
    let sqrt_ev = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_ev) * v.transpose())
}

/// Draws the two-component correlated shadow field (M x K).
pub fn correlated_shadowing(geom: &Geometry, params: &PropagationParams, rng_seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    let mut rng = rng_for(rng_seed, Stream::Shadowing);
    let (m, k) = (geom.num_aps(), geom.num_users());
    let d = geom.area_side_m();
    let ap_sqrt = decay_covariance_sqrt(geom.ap_positions(), d, params.d_decorr_m)?;
    let user_sqrt = decay_covariance_sqrt(geom.user_positions(), d, params.d_decorr_m)?;
    let a = &ap_sqrt * DVector::from_fn(m, |_, _| standard_normal(&mut rng));
    let b = &user_sqrt * DVector::from_fn(k, |_, _| standard_normal(&mut rng));
    let (wa, wb) = (params.delta_mix.sqrt(), (1.0 - params.delta_mix).sqrt());
    Ok(DMatrix::from_fn(m, k, |mi, ki| wa * a[mi] + wb * b[ki]))
}

/// Draws an i.i.d. standard-normal shadow field (M x K).
pub fn uncorrelated_shadowing(geom: &Geometry, rng_seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(rng_seed, Stream::Shadowing);
    DMatrix::from_fn(geom.num_aps(), geom.num_users(), |_, _| standard_normal(&mut rng))
}

/// `beta_mk = 10^((PL_mk + sigma_sh z_mk) / 10)`.
pub fn build_large_scale(
    geom: &Geometry,
    params: &PropagationParams,
    mode: ShadowingMode,
    rng_seed: u64,
) -> Result<LargeScale> {
    params.validate()?;
    let z = match mode {
        ShadowingMode::Correlated => correlated_shadowing(geom, params, rng_seed)?,
        ShadowingMode::Uncorrelated => uncorrelated_shadowing(geom, rng_seed),
    };
    let dist = geom.ap_user_distances();
    let mut beta = DMatrix::zeros(geom.num_aps(), geom.num_users());
    for (idx, d) in dist.iter().enumerate() {
        let pl = path_loss_db(*d, params)?;
        beta[idx] = 10f64.powf((pl + params.sigma_sh_db * z[idx]) / 10.0);
    }
    LargeScale::new(beta, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PropagationParams {
        PropagationParams::default()
    }

    #[test]
    fn single_node_network_in_bounds() {
        let g = place_network(1, 1, 100.0, 7).unwrap();
        for p in g.ap_positions().iter().chain(g.user_positions()) {
            assert!((0.0..100.0).contains(&p.x) && (0.0..100.0).contains(&p.y));
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let a = place_network(128, 40, 100.0, 42).unwrap();
        let b = place_network(128, 40, 100.0, 42).unwrap();
        assert_eq!(a, b);
        let c = place_network(128, 40, 100.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn placement_rejects_degenerate_inputs() {
        assert!(place_network(0, 1, 100.0, 1).is_err());
        assert!(place_network(1, 0, 100.0, 1).is_err());
        assert!(place_network(1, 1, 0.0, 1).is_err());
    }

    #[test]
    fn placement_mean_is_center() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..10_000u64 {
            let g = place_network(128, 40, 100.0, seed).unwrap();
            for p in g.ap_positions().iter().chain(g.user_positions()) {
                sum += p.x + p.y;
                n += 2;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 50.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn wrap_distance_examples() {
        let d = 100.0;
        assert_eq!(wrap_distance(Point::new(0.0, 0.0), Point::new(0.0, 0.0), d), 0.0);
        assert!((wrap_distance(Point::new(1.0, 0.0), Point::new(99.0, 0.0), d) - 2.0).abs() < 1e-12);
        let v = wrap_distance(Point::new(10.0, 10.0), Point::new(60.0, 90.0), d);
        assert!((v - (50f64 * 50.0 + 20.0 * 20.0).sqrt()).abs() < 1e-12);
        assert!((v - 53.851_648_071_345_04).abs() < 1e-9);
    }

    #[test]
    fn path_loss_offset_matches_hand_value() {
        let l = params().path_loss_offset_db().unwrap();
        assert!((l - 140.72).abs() < 0.01, "{l}");
    }

    #[test]
    fn path_loss_flat_inside_d0() {
        let p = params();
        let l = p.path_loss_offset_db().unwrap();
        let u = p.log_distance_unit_m;
        let flat = -l - 15.0 * (p.d1_m / u).log10() - 20.0 * (p.d0_m / u).log10();
        for d in [0.0, 1.0, 5.0, 9.99, 10.0] {
            assert!((path_loss_db(d, &p).unwrap() - flat).abs() < 1e-12);
        }
    }

    #[test]
    fn path_loss_jump_at_d1_in_metre_units() {
        let p = PropagationParams { log_distance_unit_m: 1.0, ..params() };
        let outer = path_loss_db(50.0 + 1e-9, &p).unwrap();
        let middle = path_loss_db(50.0, &p).unwrap();
        assert!((outer - middle - 1.699).abs() < 1e-3, "{}", outer - middle);
    }

    #[test]
    fn path_loss_jump_at_d1_in_km_units() {
        let p = params();
        let outer = path_loss_db(50.0 + 1e-9, &p).unwrap();
        let middle = path_loss_db(50.0, &p).unwrap();
        assert!((outer - middle - 0.05f64.log10()).abs() < 1e-6);
    }

    #[test]
    fn path_loss_monotone_beyond_d1() {
        let p = params();
        let mut prev = path_loss_db(50.1, &p).unwrap();
        for i in 1..200 {
            let v = path_loss_db(50.1 + i as f64 * 3.0, &p).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn path_loss_rejects_bad_inputs() {
        assert!(path_loss_db(-1.0, &params()).is_err());
        let p = PropagationParams { carrier_freq_mhz: 0.0, ..params() };
        assert!(path_loss_db(10.0, &p).is_err());
        let p = PropagationParams { ap_height_m: -1.0, ..params() };
        assert!(path_loss_db(10.0, &p).is_err());
    }

    #[test]
    fn noise_power_examples() {
        let p = params();
        let n = noise_power_w(&p);
        assert!((n / 6.366e-13 - 1.0).abs() < 1e-3, "{n:e}");
        let dbm = 10.0 * (n * 1e3).log10();
        assert!((dbm + 91.96).abs() < 0.01, "{dbm}");
        let p0 = PropagationParams { noise_figure_db: 0.0, ..params() };
        assert!((noise_power_w(&p0) / 8.012e-14 - 1.0).abs() < 1e-3);
        let p2 = PropagationParams { bandwidth_hz: 40e6, ..params() };
        assert_eq!(noise_power_w(&p2), 2.0 * n);
    }

    #[test]
    fn zero_delta_shadowing_depends_on_user_only() {
        let g = place_network(16, 5, 100.0, 3).unwrap();
        let p = PropagationParams { delta_mix: 0.0, ..params() };
        let z = correlated_shadowing(&g, &p, 11).unwrap();
        for k in 0..5 {
            for m in 1..16 {
                assert!((z[(m, k)] - z[(0, k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlated_ap_components_at_decorrelation_distance() {
        let p = PropagationParams { delta_mix: 1.0, ..params() };
        let g = Geometry::new(
            100.0,
            vec![Point::new(10.0, 10.0), Point::new(30.0, 10.0)],
            vec![Point::new(50.0, 50.0)],
        )
        .unwrap();
        let n = 100_000;
        let mut s = 0.0;
        for seed in 0..n {
            let z = correlated_shadowing(&g, &p, seed).unwrap();
            s += z[(0, 0)] * z[(1, 0)];
        }
        let cov = s / n as f64;
        assert!((cov - 0.5).abs() < 0.01, "{cov}");
    }

    #[test]
    fn uncorrelated_entries_are_uncorrelated() {
        let g = place_network(3, 3, 100.0, 1).unwrap();
        let n = 100_000;
        let (mut s01, mut s_var) = (0.0, 0.0);
        for seed in 0..n {
            let z = uncorrelated_shadowing(&g, seed);
            s01 += z[(0, 0)] * z[(2, 1)];
            s_var += z[(1, 1)] * z[(1, 1)];
        }
        assert!((s01 / n as f64).abs() < 0.01);
        assert!((s_var / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn correlated_marginals_have_unit_variance() {
        let g = place_network(20, 10, 100.0, 5).unwrap();
        let p = params();
        let n = 100_000u64;
        let mut acc = 0.0;
        for seed in 0..n {
            let z = correlated_shadowing(&g, &p, seed).unwrap();
            acc += z[(4, 7)] * z[(4, 7)];
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn no_shadowing_close_range_gives_equal_beta() {
        let p = PropagationParams { sigma_sh_db: 0.0, ..params() };
        let g = Geometry::new(
            100.0,
            vec![Point::new(50.0, 50.0), Point::new(52.0, 50.0)],
            vec![Point::new(51.0, 51.0), Point::new(49.0, 47.0)],
        )
        .unwrap();
        let ls = build_large_scale(&g, &p, ShadowingMode::Uncorrelated, 1).unwrap();
        let b0 = ls.beta()[(0, 0)];
        assert!(ls.beta().iter().all(|b| (b - b0).abs() <= 1e-12 * b0));
    }

    #[test]
    fn lognormal_median_equals_path_loss() {
        // d = 200 m sits in the outer branch; fix the path loss through the offset.
        let p = params();
        let g = Geometry::new(1000.0, vec![Point::new(0.0, 0.0)], vec![Point::new(200.0, 0.0)]).unwrap();
        let pl = path_loss_db(200.0, &p).unwrap();
        let mut samples: Vec<f64> = (0..20_001u64)
            .map(|s| build_large_scale(&g, &p, ShadowingMode::Uncorrelated, s).unwrap().beta()[(0, 0)])
            .collect();
        samples.sort_by(f64::total_cmp);
        let median = samples[samples.len() / 2];
        let expected = 10f64.powf(pl / 10.0);
        assert!((median / expected - 1.0).abs() < 0.05, "{median:e} vs {expected:e}");
    }

    #[test]
    fn settings_table_instance_is_positive_and_finite() {
        let g = place_network(128, 40, 100.0, 9).unwrap();
        for mode in [ShadowingMode::Correlated, ShadowingMode::Uncorrelated] {
            let ls = build_large_scale(&g, &params(), mode, 9).unwrap();
            assert!(ls.beta().iter().all(|b| *b > 0.0 && b.is_finite()));
        }
    }

    #[test]
    fn large_scale_is_bit_reproducible() {
        let g = place_network(32, 8, 500.0, 2).unwrap();
        let a = build_large_scale(&g, &params(), ShadowingMode::Correlated, 77).unwrap();
        let b = build_large_scale(&g, &params(), ShadowingMode::Correlated, 77).unwrap();
        assert_eq!(a, b);
    }
}
