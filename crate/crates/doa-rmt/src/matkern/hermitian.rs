//! Hermitian eigendecomposition: Householder tridiagonalization followed by
//! an implicit-shift QL iteration on the real tridiagonal form.

use num_complex::Complex64;

use super::{CMatrix, SampleSpectrum};
use crate::error::Error;
use crate::Result;

/// Deflation threshold, relative to the local diagonal scale.
const OFFDIAG_TOL: f64 = 1e-13;
/// Total QL iteration cap is `ITER_CAP_PER_DIM * n`.
const ITER_CAP_PER_DIM: usize = 64;

/// Full eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are returned in descending order, each paired with an
/// orthonormal eigenvector. The per-vector global phase is fixed by making
/// the largest-magnitude component real and positive, so the output is
/// fully deterministic.
pub fn hermitian_eig(m: &CMatrix) -> Result<SampleSpectrum> {
    if !m.is_square() {
        return Err(Error::shape(format!(
            "hermitian_eig needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.all_finite() {
        return Err(Error::numerical("hermitian_eig: non-finite entries"));
    }
    let scale = m.max_abs().max(1.0);
    if m.hermitian_defect() > 1e-12 * scale {
        return Err(Error::domain(
            "hermitian_eig: input is not Hermitian within 1e-12 (symmetrize first)",
        ));
    }
    let n = m.rows();
    if n == 0 {
        return Err(Error::shape("hermitian_eig: empty matrix"));
    }

    let mut a = m.clone();
    let mut q = CMatrix::identity(n);
    let (mut d, mut e) = tridiagonalize(&mut a, &mut q);
    ql_implicit(&mut d, &mut e, &mut q)?;
    sort_descending(&mut d, &mut q);
    fix_phases(&mut q);

    Ok(SampleSpectrum {
        values: d,
        vectors: q,
    })
}

/// Eigenvalues and eigenvectors of a real symmetric tridiagonal matrix with
/// diagonal `d` and subdiagonal `e` (`e[i]` couples `d[i]` and `d[i+1]`).
/// Returns values in descending order; column k of the returned real matrix
/// (encoded as complex with zero imaginary parts) is the k-th eigenvector.
pub fn tridiagonal_eig(d: &[f64], e: &[f64]) -> Result<SampleSpectrum> {
    let n = d.len();
    assert!(e.len() + 1 == n || (n == 0 && e.is_empty()));
    let mut dd = d.to_vec();
    let mut ee = e.to_vec();
    let mut q = CMatrix::identity(n);
    ql_implicit(&mut dd, &mut ee, &mut q)?;
    sort_descending(&mut dd, &mut q);
    Ok(SampleSpectrum {
        values: dd,
        vectors: q,
    })
}

/// Householder reduction of a Hermitian matrix to real tridiagonal form.
/// Transformations accumulate into `q`; returns (diagonal, subdiagonal).
fn tridiagonalize(a: &mut CMatrix, q: &mut CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    let mut w = vec![Complex64::new(0.0, 0.0); n];

    for k in 0..n.saturating_sub(2) {
        // Householder vector for column k below the diagonal.
        let mut norm_sq = 0.0;
        for i in k + 1..n {
            norm_sq += a[(i, k)].norm_sqr();
        }
        let norm = norm_sq.sqrt();
        if norm <= f64::MIN_POSITIVE {
            continue;
        }
        let x0 = a[(k + 1, k)];
        // alpha = -phase(x0) * ||x||, so v = x - alpha e1 avoids cancellation.
        let alpha = if x0.norm() > 0.0 {
            -(x0 / x0.norm()) * norm
        } else {
            Complex64::new(-norm, 0.0)
        };
        let m = n - (k + 1);
        let vv = &mut v[..m];
        for i in 0..m {
            vv[i] = a[(k + 1 + i, k)];
        }
        vv[0] -= alpha;
        let vnorm = vv.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm <= f64::MIN_POSITIVE {
            continue;
        }
        for z in vv.iter_mut() {
            *z /= vnorm;
        }

        // Trailing block update: B <- (I - 2vv^H) B (I - 2vv^H).
        // With u = Bv and w = 2u - 2(v^H u)v this is B - v w^H - w v^H.
        let ww = &mut w[..m];
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = a.row(k + 1 + i);
            for j in 0..m {
                acc += row[k + 1 + j] * vv[j];
            }
            ww[i] = acc;
        }
        let vhu: Complex64 = vv.iter().zip(ww.iter()).map(|(x, y)| x.conj() * y).sum();
        for i in 0..m {
            ww[i] = 2.0 * ww[i] - 2.0 * vhu * vv[i];
        }
        for i in 0..m {
            let vi = vv[i];
            let wi = ww[i];
            let row = a.row_mut(k + 1 + i);
            for j in 0..m {
                row[k + 1 + j] -= vi * ww[j].conj() + wi * vv[j].conj();
            }
        }

        // The reflected column k collapses to alpha e1.
        a[(k + 1, k)] = alpha;
        a[(k, k + 1)] = alpha.conj();
        for i in k + 2..n {
            a[(i, k)] = Complex64::new(0.0, 0.0);
            a[(k, i)] = Complex64::new(0.0, 0.0);
        }

        // Accumulate Q <- Q (I - 2vv^H) on columns k+1..n.
        for r in 0..n {
            let row = q.row_mut(r);
            let mut t = Complex64::new(0.0, 0.0);
            for j in 0..m {
                t += row[k + 1 + j] * vv[j];
            }
            t *= 2.0;
            for j in 0..m {
                row[k + 1 + j] -= t * vv[j].conj();
            }
        }
    }

    // Unitary diagonal similarity making the subdiagonal real nonnegative.
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut phase = Complex64::new(1.0, 0.0);
    let mut phases = vec![Complex64::new(1.0, 0.0); n];
    for i in 0..n {
        d[i] = a[(i, i)].re;
        phases[i] = phase;
        if i + 1 < n {
            let beta = a[(i + 1, i)];
            let mag = beta.norm();
            e[i] = mag;
            if mag > 0.0 {
                phase *= beta / mag;
            }
        }
    }
    for r in 0..n {
        let row = q.row_mut(r);
        for (j, ph) in phases.iter().enumerate() {
            row[j] *= ph;
        }
    }
    (d, e)
}

/// Implicit-shift QL sweep on a real symmetric tridiagonal matrix, with the
/// real plane rotations accumulated into the (complex) columns of `q`.
/// Derived from the Algol tql2 procedure of Bowdler, Martin, Reinsch and
/// Wilkinson via its EISPACK descendant.
fn ql_implicit(d: &mut [f64], e_sub: &mut [f64], q: &mut CMatrix) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    // e[i] couples d[i] and d[i+1]; index n-1 is scratch.
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(e_sub);

    let iter_cap = ITER_CAP_PER_DIM * n;
    let mut iters = 0usize;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= OFFDIAG_TOL * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }

        if m > l {
            loop {
                iters += 1;
                if iters > iter_cap {
                    return Err(Error::NonConvergence(format!(
                        "tridiagonal QL exceeded {iter_cap} iterations"
                    )));
                }

                // Implicit Wilkinson-style shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // Implicit QL transformation.
                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let gg = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * gg;
                    d[i + 1] = h + s * (c * gg + s * d[i]);

                    // Rotate columns i and i+1 of q.
                    for row_idx in 0..q.rows() {
                        let row = q.row_mut(row_idx);
                        let zi1 = row[i + 1];
                        let zi = row[i];
                        row[i + 1] = s * zi + c * zi1;
                        row[i] = c * zi - s * zi1;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= OFFDIAG_TOL * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn sort_descending(d: &mut [f64], q: &mut CMatrix) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let old_d = d.to_vec();
    let old_q = q.clone();
    for (new_col, &old_col) in order.iter().enumerate() {
        d[new_col] = old_d[old_col];
        for r in 0..q.rows() {
            q[(r, new_col)] = old_q[(r, old_col)];
        }
    }
}

/// Makes the largest-magnitude component of each column real and positive.
pub(crate) fn fix_phases(q: &mut CMatrix) {
    for j in 0..q.cols() {
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for i in 0..q.rows() {
            let mag = q[(i, j)].norm_sqr();
            if mag > best_mag + 1e-30 {
                best_mag = mag;
                best = i;
            }
        }
        let z = q[(best, j)];
        let mag = z.norm();
        if mag > 0.0 {
            let ph = (z / mag).conj();
            for i in 0..q.rows() {
                q[(i, j)] *= ph;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = CMatrix::from_fn(n, n, |_, _| {
            c(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
        });
        raw.symmetrized()
    }

    #[test]
    fn identity_eigenvalues() {
        let spec = hermitian_eig(&CMatrix::identity(4)).unwrap();
        for v in &spec.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(spec.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn diagonal_two_by_two() {
        let m = CMatrix::from_row_major(2, 2, vec![c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        let spec = hermitian_eig(&m).unwrap();
        assert!((spec.values[0] - 3.0).abs() < 1e-14);
        assert!((spec.values[1] - 1.0).abs() < 1e-14);
        // Phase convention gives exactly the standard basis.
        assert!((spec.vectors[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((spec.vectors[(1, 1)] - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn reconstruction_residual_64() {
        let m = random_hermitian(64, 7);
        let spec = hermitian_eig(&m).unwrap();
        let norm = spec.values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(spec.reconstruction_residual(&m) <= 1e-9 * norm.max(1.0));
        assert!(spec.orthonormality_defect() <= 1e-10);
        // Trace identity.
        let tr: f64 = spec.values.iter().sum();
        assert!((tr - m.trace().re).abs() <= 1e-9 * norm.max(1.0) * 64.0);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_major(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
            .unwrap();
        assert!(hermitian_eig(&m).is_err());
    }

    #[test]
    fn rejects_non_square() {
        let m = CMatrix::zeros(2, 3);
        assert!(hermitian_eig(&m).is_err());
    }

    #[test]
    fn deterministic_output() {
        let m = random_hermitian(16, 3);
        let a = hermitian_eig(&m).unwrap();
        let b = hermitian_eig(&m).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let d = vec![2.0, -1.0, 0.5, 3.0];
        let e = vec![0.7, 0.3, -0.2];
        let spec_t = tridiagonal_eig(&d, &e).unwrap();
        let dense = CMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                c(d[i], 0.0)
            } else if j + 1 == i {
                c(e[j], 0.0)
            } else if i + 1 == j {
                c(e[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let spec_d = hermitian_eig(&dense).unwrap();
        for (a, b) in spec_t.values.iter().zip(&spec_d.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
