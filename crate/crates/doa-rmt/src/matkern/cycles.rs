//! Cycle-product distance between two matrices and the associated
//! eigenvalue-gap probe.
//!
//! For K x K matrices A and B, the distance is the largest deviation
//! `|A_{i1 i2} ... A_{im i1} - B_{i1 i2} ... B_{im i1}|` over all directed
//! entry cycles: every nonempty index subset, every cyclic order (each
//! directed cycle counted once). It controls the matched eigenvalue gap as
//! `|lambda_k(A) - lambda_k(B)| <= C eps^{1/K}`.

use num_complex::Complex64;

use super::small::{for_each_permutation, general_eig_small, min_cost_assignment, SMALL_EIG_CAP};
use super::CMatrix;
use crate::error::Error;
use crate::Result;

fn check_pair(a: &CMatrix, b: &CMatrix) -> Result<usize> {
    if !a.is_square() || !b.is_square() || a.rows() != b.rows() {
        return Err(Error::shape(format!(
            "cycle gap: need equal-size square matrices, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.rows() == 0 || a.rows() > SMALL_EIG_CAP {
        return Err(Error::shape(format!(
            "cycle gap: size {} outside 1..={SMALL_EIG_CAP}",
            a.rows()
        )));
    }
    Ok(a.rows())
}

/// Largest cycle-product deviation between `a` and `b`. Symmetric in its
/// arguments and exactly zero when `a == b`.
pub fn cycle_product_gap(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let k = check_pair(a, b)?;
    let mut worst: f64 = 0.0;
    for mask in 1u32..(1u32 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let m = idx.len();
        if m == 1 {
            let i = idx[0];
            worst = worst.max((a[(i, i)] - b[(i, i)]).norm());
            continue;
        }
        // Anchor the smallest index; the (m-1)! arrangements of the rest
        // enumerate every directed cycle on the subset exactly once.
        let anchor = idx[0];
        let rest = &idx[1..];
        for_each_permutation(m - 1, |perm| {
            let mut cycle = Vec::with_capacity(m);
            cycle.push(anchor);
            cycle.extend(perm.iter().map(|&p| rest[p]));
            let mut pa = Complex64::new(1.0, 0.0);
            let mut pb = Complex64::new(1.0, 0.0);
            for t in 0..m {
                let i = cycle[t];
                let j = cycle[(t + 1) % m];
                pa *= a[(i, j)];
                pb *= b[(i, j)];
            }
            worst = worst.max((pa - pb).norm());
        });
    }
    Ok(worst)
}

/// Both sides of the cycle-product eigenvalue bound for one matrix pair.
#[derive(Debug, Clone, Copy)]
pub struct EigDiffProbe {
    /// Cycle-product distance between the two matrices.
    pub epsilon: f64,
    /// Largest per-pair eigenvalue distance under the optimal matching.
    pub eigenvalue_gap: f64,
}

/// Computes the cycle-product distance together with the matched eigenvalue
/// gap `max_k |lambda_k(a) - lambda_k(b)|`. Eigenvalues are paired by an
/// exhaustive assignment minimizing the summed squared distances (the squared
/// objective breaks ties in favor of the natural pairing, so a pure shift
/// `b = a + delta I` reports a gap of exactly `|delta|`).
pub fn eigdiff_bound_probe(a: &CMatrix, b: &CMatrix) -> Result<EigDiffProbe> {
    let k = check_pair(a, b)?;
    let epsilon = cycle_product_gap(a, b)?;
    let ea = general_eig_small(a)?.values;
    let eb = general_eig_small(b)?.values;
    let perm = min_cost_assignment(k, |i, j| (ea[i] - eb[j]).norm_sqr());
    let eigenvalue_gap = (0..k)
        .map(|i| (ea[i] - eb[perm[i]]).norm())
        .fold(0.0, f64::max);
    Ok(EigDiffProbe {
        epsilon,
        eigenvalue_gap,
    })
}
