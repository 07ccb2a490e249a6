//! Dense complex matrix kernel.
//!
//! Hermitian eigendecomposition (tridiagonalization plus implicit-shift QL),
//! general complex eigenvalues for matrices up to 8 x 8 (balanced Hessenberg
//! QR with Wilkinson shifts), principal-minor sums, cycle-product distances
//! with their eigenvalue-gap probe, and a Lanczos path for the dominant
//! eigenpairs of large Hermitian operators.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! many threads at once.

mod cmatrix;
mod cycles;
mod hermitian;
mod lanczos;
mod small;

pub use cmatrix::CMatrix;
pub use cycles::{cycle_product_gap, eigdiff_bound_probe, EigDiffProbe};
pub use hermitian::{hermitian_eig, tridiagonal_eig};
pub use lanczos::{top_eigenpairs, GramOp, HermitianOp};
pub use small::{det, general_eig_small, principal_minor_sums, solve, SMALL_EIG_CAP};

pub(crate) use small::min_cost_assignment;

use num_complex::Complex64;

/// Real eigenvalues in descending order paired with orthonormal eigenvectors
/// (column k of `vectors` belongs to `values[k]`). May hold the full spectrum
/// or only a leading block of it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl SampleSpectrum {
    /// Columns of the stored eigenvector block.
    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Dimension of the underlying space.
    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }

    /// The leading `k` eigenvector columns as an `N x k` matrix.
    pub fn leading_vectors(&self, k: usize) -> CMatrix {
        assert!(k <= self.count());
        CMatrix::from_fn(self.dim(), k, |i, j| self.vectors[(i, j)])
    }

    /// `max |V^H V - I|` over the stored columns.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = &self.vectors;
        let gram = v.adjoint().mul(v);
        let mut worst: f64 = 0.0;
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// `max_k || M v_k - lambda_k v_k ||` against the matrix `m`.
    pub fn reconstruction_residual(&self, m: &CMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.count() {
            let v = self.vectors.col(k);
            let mv = m.matvec(&v);
            let lam = self.values[k];
            let r = mv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lam * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        worst
    }
}

/// Spectral norm of a small matrix through the Gram eigenvalues.
pub fn spectral_norm_small(m: &CMatrix) -> f64 {
    let gram = m.adjoint().mul(m).symmetrized();
    match hermitian_eig(&gram) {
        Ok(spec) => spec.values[0].max(0.0).sqrt(),
        Err(_) => f64::NAN,
    }
}

/// Unordered multiset of complex eigenvalues of a small matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    pub fn product(&self) -> Complex64 {
        self.values.iter().product()
    }
}
