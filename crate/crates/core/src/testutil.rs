//! Random instances shared by unit tests.

use nalgebra::DMatrix;
use rand::RngExt;

use crate::chest::LmmseBank;
use crate::rng::{rng_for, Stream};

/// Large-scale gains log-uniform in `[0.05, 2]`.
pub fn random_beta(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed ^ 0x5eed_0000, Stream::Geometry);
    DMatrix::from_fn(m, k, |_, _| 0.05 * 40f64.powf(rng.random::<f64>()))
}

/// Random downlink coefficients using a random fraction of every AP budget.
pub fn random_downlink_eta(bank: &LmmseBank, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed ^ 0xd0_0000, Stream::Geometry);
    let p = bank.est_power();
    let mut eta = DMatrix::from_fn(p.nrows(), p.ncols(), |_, _| rng.random::<f64>());
    for m in 0..p.nrows() {
        let load: f64 = (0..p.ncols()).map(|k| eta[(m, k)] * p[(m, k)]).sum();
        let frac = 0.2 + 0.8 * rng.random::<f64>();
        for k in 0..p.ncols() {
            eta[(m, k)] *= frac / load;
        }
    }
    eta
}
