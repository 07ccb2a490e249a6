//! Small dense solvers: general complex eigenvalues (K <= 8) via balanced
//! Hessenberg QR with Wilkinson shifts, LU factorization helpers, principal
//! minor sums, and exhaustive assignment utilities.

use num_complex::Complex64;

use super::{CMatrix, ComplexSpectrum};
use crate::error::Error;
use crate::Result;

/// Library scope cap for the small general eigenproblem.
pub const SMALL_EIG_CAP: usize = 8;

const EPS: f64 = 2.220_446_049_250_313e-16;

fn check_small_square(m: &CMatrix, what: &str) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::shape(format!(
            "{what}: matrix must be square, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() > SMALL_EIG_CAP {
        return Err(Error::shape(format!(
            "{what}: size {} exceeds the cap {SMALL_EIG_CAP}",
            m.rows()
        )));
    }
    if m.rows() == 0 {
        return Err(Error::shape(format!("{what}: empty matrix")));
    }
    if !m.all_finite() {
        return Err(Error::numerical(format!("{what}: non-finite entries")));
    }
    Ok(m.rows())
}

/// All eigenvalues (with multiplicity) of a general complex matrix, K <= 8.
pub fn general_eig_small(m: &CMatrix) -> Result<ComplexSpectrum> {
    let n = check_small_square(m, "general_eig_small")?;
    if n == 1 {
        return Ok(ComplexSpectrum {
            values: vec![m[(0, 0)]],
        });
    }
    let mut h = m.clone();
    balance(&mut h);
    hessenberg(&mut h);
    let values = hessenberg_qr_eigenvalues(&mut h)?;
    Ok(ComplexSpectrum { values })
}

/// Iterative row/column norm balancing by powers of two (a diagonal
/// similarity, so eigenvalues are untouched even in floating point).
fn balance(h: &mut CMatrix) {
    const RADIX: f64 = 2.0;
    let n = h.rows();
    for _ in 0..64 {
        let mut converged = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    r += h[(i, j)].norm();
                    c += h[(j, i)].norm();
                }
            }
            if r == 0.0 || c == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut c2 = c;
            let mut r2 = r;
            while c2 < r2 / RADIX {
                c2 *= RADIX;
                r2 /= RADIX;
                f *= RADIX;
            }
            while c2 >= r2 * RADIX {
                c2 /= RADIX;
                r2 *= RADIX;
                f /= RADIX;
            }
            if (c2 + r2) < 0.95 * s && f != 1.0 {
                converged = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    h[(i, j)] = h[(i, j)] * inv;
                    h[(j, i)] = h[(j, i)] * f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// Householder reduction to upper Hessenberg form.
fn hessenberg(h: &mut CMatrix) {
    let n = h.rows();
    for k in 0..n.saturating_sub(2) {
        let m = n - (k + 1);
        let mut norm_sq = 0.0;
        for i in k + 1..n {
            norm_sq += h[(i, k)].norm_sqr();
        }
        let norm = norm_sq.sqrt();
        if norm <= f64::MIN_POSITIVE {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0.norm() > 0.0 {
            -(x0 / x0.norm()) * norm
        } else {
            Complex64::new(-norm, 0.0)
        };
        let mut v: Vec<Complex64> = (0..m).map(|i| h[(k + 1 + i, k)]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm <= f64::MIN_POSITIVE {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }

        // Left: rows k+1..n of all columns.
        for j in 0..n {
            let mut t = Complex64::new(0.0, 0.0);
            for i in 0..m {
                t += v[i].conj() * h[(k + 1 + i, j)];
            }
            t *= 2.0;
            for i in 0..m {
                let val = h[(k + 1 + i, j)] - t * v[i];
                h[(k + 1 + i, j)] = val;
            }
        }
        // Right: columns k+1..n of all rows.
        for i in 0..n {
            let mut t = Complex64::new(0.0, 0.0);
            for j in 0..m {
                t += h[(i, k + 1 + j)] * v[j];
            }
            t *= 2.0;
            for j in 0..m {
                let val = h[(i, k + 1 + j)] - t * v[j].conj();
                h[(i, k + 1 + j)] = val;
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
}

/// Unitary plane rotation zeroing `g` against `f`:
/// `[[c, s], [-conj(s), c]] * [f, g]^T = [r, 0]^T` with real `c`.
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64) {
    let fm = f.norm();
    let gm = g.norm();
    if gm == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if fm == 0.0 {
        return (0.0, g.conj() / gm);
    }
    let h = fm.hypot(gm);
    let c = fm / h;
    let s = (f / fm) * g.conj() / h;
    (c, s)
}

/// Eigenvalues of the two-by-two block `[[a, b], [c, d]]`.
fn eig2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let mid = (a + d) * 0.5;
    let disc = ((a - d) * (a - d) * 0.25 + b * c).sqrt();
    (mid + disc, mid - disc)
}

fn hessenberg_qr_eigenvalues(h: &mut CMatrix) -> Result<Vec<Complex64>> {
    let n = h.rows();
    let mut values = Vec::with_capacity(n);
    let mut hi = n - 1;
    let mut total_iters = 0usize;
    let iter_cap = 60 * n.max(4);
    let mut since_deflate = 0usize;

    loop {
        // Zero negligible subdiagonals and find the active window start.
        let mut lo = hi;
        while lo > 0 {
            let small = EPS * (h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm()).max(f64::MIN_POSITIVE);
            if h[(lo, lo - 1)].norm() <= small {
                h[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }

        if lo == hi {
            values.push(h[(hi, hi)]);
            since_deflate = 0;
            if hi == 0 {
                break;
            }
            hi -= 1;
            continue;
        }
        if lo + 1 == hi {
            let (l1, l2) = eig2(h[(lo, lo)], h[(lo, hi)], h[(hi, lo)], h[(hi, hi)]);
            values.push(l1);
            values.push(l2);
            since_deflate = 0;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            continue;
        }

        total_iters += 1;
        since_deflate += 1;
        if total_iters > iter_cap {
            return Err(Error::NonConvergence(format!(
                "Hessenberg QR exceeded {iter_cap} iterations"
            )));
        }

        let shift = if since_deflate % 12 == 0 {
            // Exceptional shift to break symmetry-locked cases.
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            let (l1, l2) = eig2(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
            let corner = h[(hi, hi)];
            if (l1 - corner).norm() <= (l2 - corner).norm() {
                l1
            } else {
                l2
            }
        };
        qr_step(h, lo, hi, shift);
    }

    Ok(values)
}

/// One explicit single-shift QR step on the active window `[lo, hi]`.
fn qr_step(h: &mut CMatrix, lo: usize, hi: usize, shift: Complex64) {
    for i in lo..=hi {
        h[(i, i)] -= shift;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
        rots.push((c, s));
        for j in k..=hi {
            let t1 = h[(k, j)];
            let t2 = h[(k + 1, j)];
            h[(k, j)] = c * t1 + s * t2;
            h[(k + 1, j)] = -s.conj() * t1 + c * t2;
        }
        h[(k + 1, k)] = Complex64::new(0.0, 0.0);
    }
    for (offset, (c, s)) in rots.into_iter().enumerate() {
        let k = lo + offset;
        for i in lo..=hi.min(k + 2) {
            let t1 = h[(i, k)];
            let t2 = h[(i, k + 1)];
            h[(i, k)] = c * t1 + s.conj() * t2;
            h[(i, k + 1)] = -s * t1 + c * t2;
        }
    }
    for i in lo..=hi {
        h[(i, i)] += shift;
    }
}

/// LU factorization with partial pivoting; returns the permuted factors in
/// place, the pivot rows, and the sign of the permutation.
struct Lu {
    lu: CMatrix,
    pivots: Vec<usize>,
    sign: f64,
    singular: bool,
}

fn lu_factor(m: &CMatrix) -> Lu {
    let n = m.rows();
    let mut lu = m.clone();
    let mut pivots = vec![0usize; n];
    let mut sign = 1.0;
    let mut singular = false;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].norm();
        for i in k + 1..n {
            let mag = lu[(i, k)].norm();
            if mag > best {
                best = mag;
                p = i;
            }
        }
        pivots[k] = p;
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            sign = -sign;
        }
        let piv = lu[(k, k)];
        if piv.norm() <= f64::MIN_POSITIVE {
            singular = true;
            continue;
        }
        for i in k + 1..n {
            let factor = lu[(i, k)] / piv;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let sub = factor * lu[(k, j)];
                lu[(i, j)] -= sub;
            }
        }
    }
    Lu {
        lu,
        pivots,
        sign,
        singular,
    }
}

/// Determinant by pivoted LU.
pub fn det(m: &CMatrix) -> Result<Complex64> {
    if !m.is_square() {
        return Err(Error::shape("det: matrix must be square"));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let f = lu_factor(m);
    let mut d = Complex64::new(f.sign, 0.0);
    for i in 0..n {
        d *= f.lu[(i, i)];
    }
    Ok(d)
}

/// Solves `A X = B` by pivoted LU. Errors when a pivot collapses.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::shape("solve: dimension mismatch"));
    }
    let n = a.rows();
    let f = lu_factor(a);
    if f.singular {
        return Err(Error::Singular("solve: zero pivot in LU".into()));
    }
    let mut x = b.clone();
    for k in 0..n {
        let p = f.pivots[k];
        if p != k {
            for j in 0..x.cols() {
                let t = x[(k, j)];
                x[(k, j)] = x[(p, j)];
                x[(p, j)] = t;
            }
        }
    }
    // Forward substitution with unit lower factor.
    for k in 0..n {
        for i in k + 1..n {
            let factor = f.lu[(i, k)];
            for j in 0..x.cols() {
                let sub = factor * x[(k, j)];
                x[(i, j)] -= sub;
            }
        }
    }
    // Back substitution.
    for k in (0..n).rev() {
        let piv = f.lu[(k, k)];
        for j in 0..x.cols() {
            x[(k, j)] /= piv;
        }
        for i in 0..k {
            let factor = f.lu[(i, k)];
            for j in 0..x.cols() {
                let sub = factor * x[(k, j)];
                x[(i, j)] -= sub;
            }
        }
    }
    Ok(x)
}

/// Sums of k-by-k principal minors, k = 1..=K. `S_1` is the trace and `S_K`
/// the determinant; the characteristic polynomial is
/// `lambda^K - S_1 lambda^{K-1} + ... + (-1)^K S_K`.
pub fn principal_minor_sums(m: &CMatrix) -> Result<Vec<Complex64>> {
    let n = check_small_square(m, "principal_minor_sums")?;
    let mut sums = vec![Complex64::new(0.0, 0.0); n];
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = idx.len();
        let sub = CMatrix::from_fn(k, k, |i, j| m[(idx[i], idx[j])]);
        sums[k - 1] += det(&sub)?;
    }
    Ok(sums)
}

/// Calls `f` with every permutation of `0..k` (Heap's algorithm).
pub(crate) fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut stack = vec![0usize; k];
    f(&perm);
    let mut i = 1;
    while i < k {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            f(&perm);
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
}

/// Exhaustive assignment minimizing the total cost `sum_i cost(i, perm[i])`.
/// Returns the optimal permutation.
pub(crate) fn min_cost_assignment(k: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_permutation(k, |perm| {
        let c: f64 = (0..k).map(|i| cost(i, perm[i])).sum();
        match &best {
            Some((bc, _)) if *bc <= c => {}
            _ => best = Some((c, perm.to_vec())),
        }
    });
    best.expect("k >= 1").1
}
