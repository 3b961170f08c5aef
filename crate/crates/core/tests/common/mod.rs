//! Instance builders shared by the integration suites.
#![allow(dead_code)]

use std::io::Write;

use cellfree::chest::{build_lmmse_bank, LmmseBank};
use cellfree::netgen::LargeScale;
use cellfree::pilots::{random_pilot_book, PilotBook};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-uniform large-scale fading in `[1e-2, 10]`.
pub fn random_beta(rng: &mut ChaCha8Rng, m: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, k, |_, _| 10f64.powf(rng.random::<f64>() * 3.0 - 2.0))
}

pub struct Instance {
    pub ls: LargeScale,
    pub pilots: PilotBook,
    pub bank: LmmseBank,
    pub rho_p: f64,
    pub rho: f64,
}

/// Random sizes up to `max_m x max_k`, random pilots, powers in `[0.5, 20]`.
pub fn random_instance(seed: u64, max_m: usize, max_k: usize) -> Instance {
    let mut r = rng(seed);
    let m = r.random_range(1..=max_m);
    let k = r.random_range(1..=max_k);
    let tau = r.random_range(1..=k + 2);
    let ls = LargeScale::from_beta(random_beta(&mut r, m, k)).unwrap();
    let pilots = random_pilot_book(tau, k, seed).unwrap();
    let rho_p = r.random_range(0.5..20.0);
    let rho = r.random_range(0.5..20.0);
    let bank = build_lmmse_bank(&ls, &pilots, rho_p).unwrap();
    Instance { ls, pilots, bank, rho_p, rho }
}

/// Random downlink coefficients with every AP spending a random share of
/// its budget.
pub fn random_downlink_eta(r: &mut ChaCha8Rng, bank: &LmmseBank) -> DMatrix<f64> {
    let v = bank.est_power();
    let (m, k) = v.shape();
    let mut eta = DMatrix::from_fn(m, k, |_, _| r.random::<f64>() + 1e-3);
    for a in 0..m {
        let load: f64 = (0..k).map(|u| eta[(a, u)] * v[(a, u)]).sum();
        let share = r.random_range(0.2..1.0);
        for u in 0..k {
            eta[(a, u)] *= share / load;
        }
    }
    eta
}

/// Prints past the test harness's output capture so the line always lands
/// in the log.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
