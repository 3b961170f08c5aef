//! Pilot books: one unit-norm pilot of length `tau` per active user.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::rng::{complex_normal, rng_for, Stream};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PilotKind {
    /// Uniform on the complex unit sphere.
    RandomSphere,
    /// Columns of a matrix with `Psi^H Psi = I_K`.
    Orthonormal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    psi: CMatrix,
    kind: PilotKind,
}

impl PilotBook {
    /// Wraps a user-supplied `tau x K` pilot matrix. Columns must have unit
    /// norm; the kind is inferred from the Gram matrix.
    pub fn from_matrix(psi: CMatrix) -> Result<Self> {
        if psi.nrows() == 0 || psi.ncols() == 0 {
            return Err(invalid("pilot matrix must be nonempty"));
        }
        for (k, col) in psi.column_iter().enumerate() {
            let n = col.norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("pilot {k} has norm {n}, expected 1")));
            }
        }
        let gram = psi.adjoint() * &psi;
        let orthonormal = (0..gram.nrows())
            .all(|i| (0..gram.ncols()).all(|j| i == j || gram[(i, j)].norm() < 1e-9));
        let kind = if orthonormal { PilotKind::Orthonormal } else { PilotKind::RandomSphere };
        Ok(Self { psi, kind })
    }

    pub fn psi(&self) -> &CMatrix {
        &self.psi
    }

    pub fn tau(&self) -> usize {
        self.psi.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.psi.ncols()
    }

    pub fn kind(&self) -> PilotKind {
        self.kind
    }

    /// `|psi_i^H psi_j|^2` for all pairs.
    pub fn correlation_sq(&self) -> DMatrix<f64> {
        (self.psi.adjoint() * &self.psi).map(|z| z.norm_sqr())
    }
}

fn gaussian_matrix(tau: usize, k: usize, rng_seed: u64) -> CMatrix {
    let mut rng = rng_for(rng_seed, Stream::Pilots);
    // Column-major fill keeps column j's draws independent of K.
    let data: Vec<Complex64> = (0..tau * k).map(|_| complex_normal(&mut rng)).collect();
    CMatrix::from_vec(tau, k, data)
}

/// Random pilots: normalized complex Gaussian vectors, i.e. uniform on the
/// unit sphere of `C^tau`.
pub fn random_pilot_book(tau: usize, k: usize, rng_seed: u64) -> Result<PilotBook> {
    if tau == 0 || k == 0 {
        return Err(invalid("pilot length and user count must be at least 1"));
    }
    let mut psi = gaussian_matrix(tau, k, rng_seed);
    for mut col in psi.column_iter_mut() {
        let n = col.norm();
        col /= Complex64::from(n);
    }
    Ok(PilotBook { psi, kind: PilotKind::RandomSphere })
}

/// Orthonormal pilots from the QR factor of a random Gaussian matrix.
pub fn orthonormal_pilot_book(tau: usize, k: usize, rng_seed: u64) -> Result<PilotBook> {
    if k == 0 || tau < k {
        return Err(invalid(format!("orthonormal pilots need tau >= K >= 1 (tau={tau}, K={k})")));
    }
    let q = gaussian_matrix(tau, k, rng_seed).qr().q();
    Ok(PilotBook { psi: q, kind: PilotKind::Orthonormal })
}
