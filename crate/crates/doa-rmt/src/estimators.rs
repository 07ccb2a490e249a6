//! DoA estimators: the classical subspace-rotation method (ESPRIT), its
//! shrinkage-debiased variant (G-ESPRIT), null-spectrum scanners (MUSIC and
//! G-MUSIC), the deterministic lower bound on unbiased estimator variance,
//! and angle matching/wrapping utilities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matkern::{
    general_eig_small, min_cost_assignment, solve, CMatrix, SampleSpectrum,
};
use crate::rmttheory::{bias_factor, spike_inverse, COND_LIMIT, EPS_G};
use crate::sigmodel::{steering_vector, subarray_rows, SelectionWindow, UlaScenario, WindowHalf};
use crate::Result;

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Esprit,
    Gesprit,
    Music,
    Gmusic,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Esprit => "esprit",
            Method::Gesprit => "gesprit",
            Method::Music => "music",
            Method::Gmusic => "gmusic",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The two K x K matrices built from a subspace and the selection windows.
#[derive(Debug, Clone)]
pub struct SubspacePair {
    /// `W1^H W1` for `W1` the first window of the subspace (Hermitian PSD).
    pub phi1: CMatrix,
    /// `W1^H W2` for `W2` the shifted window.
    pub phi2: CMatrix,
    /// Condition estimate of `phi1`.
    pub cond1: f64,
}

/// Builds the rotation-equation pair from an orthonormal subspace basis.
pub fn build_subspace_pair(u_k: &CMatrix, w: &SelectionWindow) -> Result<SubspacePair> {
    let gram_defect = {
        let g = u_k.adjoint().mul(u_k);
        let mut worst: f64 = 0.0;
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    };
    if gram_defect > 1e-8 {
        return Err(Error::domain(format!(
            "build_subspace_pair: columns not orthonormal (defect {gram_defect:.3e})"
        )));
    }
    let w1 = subarray_rows(u_k, w, WindowHalf::First)?;
    let w2 = subarray_rows(u_k, w, WindowHalf::Second)?;
    let phi1 = w1.adjoint().mul(&w1).symmetrized();
    let phi2 = w1.adjoint().mul(&w2);
    let cond1 = crate::rmttheory::hermitian_condition(&phi1)?;
    Ok(SubspacePair { phi1, phi2, cond1 })
}

/// Per-source estimation result.
#[derive(Debug, Clone)]
pub struct DoaEstimate {
    /// Estimated angles, wrapped to the principal interval and sorted
    /// ascending. Pairing with true sources is the caller's concern.
    pub angles: Vec<f64>,
    /// Spike-strength estimates in descending sample-eigenvalue order
    /// (classical methods report the zero-aspect-ratio inversion).
    pub ell_hat: Vec<f64>,
    /// Shrinkage estimates in the same order, clamped to `[EPS_G, 1]`.
    pub g_hat: Vec<f64>,
    /// Flags eigenvalues at or below the detection edge.
    pub below_threshold: Vec<bool>,
    pub method: Method,
}

fn angles_from_pair(phi1: &CMatrix, phi2: &CMatrix, cond1: f64, delta: usize) -> Result<Vec<f64>> {
    if cond1 > COND_LIMIT {
        return Err(Error::Singular(format!(
            "rotation Gram matrix condition {cond1:.3e} exceeds {COND_LIMIT:.0e}"
        )));
    }
    let phi = solve(phi1, phi2)?;
    let eigs = general_eig_small(&phi)?;
    let d = delta as f64;
    let mut angles: Vec<f64> = eigs.values.iter().map(|l| wrap_angle(l.arg() / d, d)).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(angles)
}

/// Spike and shrinkage estimates from the top sample eigenvalues.
fn spike_estimates(values: &[f64], k: usize, c: f64) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut ell_hat = Vec::with_capacity(k);
    let mut g_hat = Vec::with_capacity(k);
    let mut below = Vec::with_capacity(k);
    for &lam in &values[..k] {
        match spike_inverse(lam, c) {
            Some(ell) => {
                ell_hat.push(ell);
                g_hat.push(bias_factor(ell, c).clamp(EPS_G, 1.0));
                below.push(false);
            }
            None => {
                ell_hat.push(f64::NAN);
                g_hat.push(EPS_G);
                below.push(true);
            }
        }
    }
    (ell_hat, g_hat, below)
}

fn check_subspace_args(spectrum: &SampleSpectrum, k: usize) -> Result<()> {
    if k == 0 || k > spectrum.count() {
        return Err(Error::shape(format!(
            "need 1 <= K <= {} stored eigenpairs, got K = {k}",
            spectrum.count()
        )));
    }
    Ok(())
}

/// Classical rotation-invariance estimator: angles of the eigenvalues of
/// `phi1^{-1} phi2`, divided by the window shift.
pub fn esprit(
    spectrum: &SampleSpectrum,
    k: usize,
    w: &SelectionWindow,
    delta: usize,
) -> Result<DoaEstimate> {
    check_subspace_args(spectrum, k)?;
    let u_k = spectrum.leading_vectors(k);
    let pair = build_subspace_pair(&u_k, w)?;
    let angles = angles_from_pair(&pair.phi1, &pair.phi2, pair.cond1, delta)?;
    let (ell_hat, g_hat, below) = spike_estimates(&spectrum.values, k, 0.0);
    Ok(DoaEstimate {
        angles,
        ell_hat,
        g_hat,
        below_threshold: below,
        method: Method::Esprit,
    })
}

/// Debiased rotation estimator: rescales the rotation pair by the inverse
/// square roots of the estimated shrinkage factors
/// (`phi1_g = D^{-1/2} (phi1 - tau I) D^{-1/2} + tau I`,
/// `phi2_g = D^{-1/2} phi2 D^{-1/2}` with `D = diag(g_hat)`), then reads the
/// eigenvalue angles as in the classical method.
pub fn gesprit(
    spectrum: &SampleSpectrum,
    k: usize,
    w: &SelectionWindow,
    delta: usize,
    c: f64,
) -> Result<DoaEstimate> {
    check_subspace_args(spectrum, k)?;
    if c < 0.0 || !c.is_finite() {
        return Err(Error::domain("gesprit: aspect ratio must be nonnegative"));
    }
    let (ell_hat, g_hat, below) = spike_estimates(&spectrum.values, k, c);
    let mut est = gesprit_with_shrinkage(spectrum, k, w, delta, &g_hat)?;
    est.ell_hat = ell_hat;
    est.below_threshold = below;
    Ok(est)
}

/// Debiased rotation estimator with externally supplied shrinkage factors
/// (all ones reproduces the classical estimator exactly).
pub fn gesprit_with_shrinkage(
    spectrum: &SampleSpectrum,
    k: usize,
    w: &SelectionWindow,
    delta: usize,
    g_hat: &[f64],
) -> Result<DoaEstimate> {
    check_subspace_args(spectrum, k)?;
    if g_hat.len() != k || g_hat.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::domain("gesprit: need K positive shrinkage factors"));
    }
    let u_k = spectrum.leading_vectors(k);
    let pair = build_subspace_pair(&u_k, w)?;
    let tau = w.length as f64 / spectrum.dim() as f64;
    let (phi1_g, phi2_g) = debiased_pair(&pair, g_hat, tau);
    let cond = crate::rmttheory::hermitian_condition(&phi1_g.symmetrized())?;
    let angles = angles_from_pair(&phi1_g, &phi2_g, cond, delta)?;
    Ok(DoaEstimate {
        angles,
        ell_hat: vec![f64::NAN; k],
        g_hat: g_hat.to_vec(),
        below_threshold: vec![false; k],
        method: Method::Gesprit,
    })
}

/// The debiasing transform on a rotation pair:
/// `phi1_g = D^{-1/2} (phi1 - tau I) D^{-1/2} + tau I` and
/// `phi2_g = D^{-1/2} phi2 D^{-1/2}` with `D = diag(g)`.
pub fn debiased_pair(pair: &SubspacePair, g: &[f64], tau: f64) -> (CMatrix, CMatrix) {
    let k = pair.phi1.rows();
    assert_eq!(g.len(), k);
    let inv_root: Vec<f64> = g.iter().map(|g| 1.0 / g.sqrt()).collect();
    let mut phi1_g = CMatrix::from_fn(k, k, |i, j| pair.phi1[(i, j)] * (inv_root[i] * inv_root[j]));
    for i in 0..k {
        phi1_g[(i, i)] += Complex64::new(tau * (1.0 - inv_root[i] * inv_root[i]), 0.0);
    }
    let phi2_g = CMatrix::from_fn(k, k, |i, j| pair.phi2[(i, j)] * (inv_root[i] * inv_root[j]));
    (phi1_g, phi2_g)
}

/// Null-spectrum of a scan: grid angles, values, and refined minima.
#[derive(Debug, Clone)]
pub struct PseudoSpectrum {
    /// Scan grid over `[-pi, pi)`.
    pub grid: Vec<f64>,
    /// Null-spectrum values on the grid (`1 - sum_k w_k |a(theta)^H u_k|^2`);
    /// DoAs sit at the minima, i.e. at the peaks of the reciprocal.
    pub values: Vec<f64>,
    /// Refined minimum locations (at most K).
    pub peaks: Vec<f64>,
}

/// Recommended scan grid size for an array of `n` sensors.
pub fn default_grid_size(n: usize) -> usize {
    8192usize.max(16 * n)
}

/// Signal-subspace scanner: minima of `1 - sum_{k<=K} |a(theta)^H u_k|^2`.
pub fn music_spectrum(
    spectrum: &SampleSpectrum,
    k: usize,
    grid_size: usize,
) -> Result<(PseudoSpectrum, DoaEstimate)> {
    weighted_scan(spectrum, k, grid_size, None, 0.0, Method::Music)
}

/// Shrinkage-weighted scanner: minima of
/// `1 - sum_{k<=K} (1/g_hat_k) |a(theta)^H u_k|^2`. Below-threshold modes use
/// the clamped shrinkage and are flagged.
pub fn gmusic_spectrum(
    spectrum: &SampleSpectrum,
    k: usize,
    grid_size: usize,
    c: f64,
) -> Result<(PseudoSpectrum, DoaEstimate)> {
    check_subspace_args(spectrum, k)?;
    let (_, g_hat, _) = spike_estimates(&spectrum.values, k, c);
    let weights: Vec<f64> = g_hat.iter().map(|g| 1.0 / g).collect();
    weighted_scan(spectrum, k, grid_size, Some(weights), c, Method::Gmusic)
}

fn weighted_scan(
    spectrum: &SampleSpectrum,
    k: usize,
    grid_size: usize,
    weights: Option<Vec<f64>>,
    c: f64,
    method: Method,
) -> Result<(PseudoSpectrum, DoaEstimate)> {
    check_subspace_args(spectrum, k)?;
    if grid_size < 16 {
        return Err(Error::domain("scan grid too coarse"));
    }
    let n = spectrum.dim();
    let w = match &weights {
        Some(w) => w.clone(),
        None => vec![1.0; k],
    };

    let u_k = spectrum.leading_vectors(k);
    let objective = |theta: f64| -> f64 {
        let a = steering_vector(theta, n).expect("n >= 1");
        let mut acc = 0.0;
        for col in 0..k {
            let mut dot = Complex64::new(0.0, 0.0);
            for i in 0..n {
                dot += a[i].conj() * u_k[(i, col)];
            }
            acc += w[col] * dot.norm_sqr();
        }
        1.0 - acc
    };

    let step = std::f64::consts::TAU / grid_size as f64;
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| -std::f64::consts::PI + i as f64 * step)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| objective(t)).collect();

    // Local minima on the periodic grid.
    let mut minima: Vec<(f64, usize)> = Vec::new();
    for i in 0..grid_size {
        let prev = values[(i + grid_size - 1) % grid_size];
        let next = values[(i + 1) % grid_size];
        if values[i] < prev && values[i] <= next {
            minima.push((values[i], i));
        }
    }
    minima.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let found = minima.len().min(k);

    let mut peaks: Vec<f64> = minima[..found]
        .iter()
        .map(|&(_, i)| refine_minimum(&objective, grid[i], step))
        .collect();
    peaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    if found < k {
        return Err(Error::numerical(format!(
            "{method}: found {found} spectrum minima for K = {k} sources"
        )));
    }

    let (ell_hat, g_hat, below) = spike_estimates(&spectrum.values, k, c);
    let est = DoaEstimate {
        angles: peaks.clone(),
        ell_hat,
        g_hat,
        below_threshold: below,
        method,
    };
    Ok((
        PseudoSpectrum {
            grid,
            values,
            peaks,
        },
        est,
    ))
}

/// Iterated parabolic refinement of a grid minimum down to a relative
/// tolerance of 1e-10 grid steps.
fn refine_minimum(objective: &dyn Fn(f64) -> f64, center: f64, step: f64) -> f64 {
    let mut x = center;
    let mut h = step;
    for _ in 0..64 {
        let fm = objective(x - h);
        let f0 = objective(x);
        let fp = objective(x + h);
        let denom = fm - 2.0 * f0 + fp;
        if denom.abs() <= f64::MIN_POSITIVE {
            break;
        }
        let shift = 0.5 * h * (fm - fp) / denom;
        // Keep the parabolic step inside the bracket.
        let shift = shift.clamp(-h, h);
        if objective(x + shift) <= f0 {
            x += shift;
        }
        h *= 0.5;
        if h <= 1e-10 * step {
            break;
        }
    }
    x
}

/// Deterministic lower bound on per-source variance of unbiased estimators:
/// diagonal of
/// `sigma^2 / (2N) { Re[(D^H (I - A (A^H A)^{-1} A^H) D) o P^T] }^{-1}`
/// with `D` the analytic steering derivatives and `P` including the SNR
/// multiplier (`o` is the entrywise product, `sigma^2 = 1`).
pub fn crb(s: &UlaScenario) -> Result<Vec<f64>> {
    s.validate()?;
    if s.k == 0 {
        return Err(Error::domain("crb: no sources"));
    }
    let n = s.n;
    let k = s.k;
    let a = s.steering();
    let d = steering_derivative_matrix(&s.thetas, n);

    // D^H (I - A (A^H A)^{-1} A^H) D through K x K blocks.
    let aha = a.adjoint().mul(&a).symmetrized();
    let ahd = a.adjoint().mul(&d);
    let dhd = d.adjoint().mul(&d);
    let solved = solve(&aha, &ahd).map_err(|_| Error::Singular("crb: A^H A singular".into()))?;
    let projected = dhd.sub(&ahd.adjoint().mul(&solved));

    let p = s.scaled_p();
    // Re[projected o P^T], a real K x K matrix.
    let mut fim = CMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let prod = projected[(i, j)] * p[(j, i)];
            fim[(i, j)] = Complex64::new(prod.re, 0.0);
        }
    }
    let inv = solve(&fim, &CMatrix::identity(k))
        .map_err(|_| Error::Singular("crb: singular information matrix".into()))?;
    let scale = 1.0 / (2.0 * n as f64);
    Ok((0..k).map(|i| scale * inv[(i, i)].re).collect())
}

/// Analytic derivative of the steering matrix: entry (m, k) is
/// `i m exp(i m theta_k) / sqrt(N)` (0-based row m).
pub fn steering_derivative_matrix(thetas: &[f64], n: usize) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, thetas.len(), |m, k| {
        Complex64::i() * m as f64 * Complex64::from_polar(scale, m as f64 * thetas[k])
    })
}

/// Wraps an angle into the principal interval `(-pi/delta, pi/delta]`.
pub fn wrap_angle(x: f64, delta: f64) -> f64 {
    let period = std::f64::consts::TAU / delta;
    let wrapped = x - period * (x / period - 0.5).ceil();
    if wrapped <= -period / 2.0 {
        wrapped + period
    } else {
        wrapped
    }
}

/// Wrapped distance `|((x - y + pi/delta) mod 2pi/delta) - pi/delta|`.
pub fn wrapped_distance(x: f64, y: f64, delta: f64) -> f64 {
    wrap_angle(x - y, delta).abs()
}

/// Optimal pairing of estimates to references under the wrapped distance:
/// returns, for each reference index, the index of its matched estimate.
/// Exhaustive over permutations (K <= 8), minimizing the summed squared
/// wrapped errors.
pub fn match_assignment(est: &[f64], truth: &[f64], delta: f64) -> Result<Vec<usize>> {
    if est.len() != truth.len() {
        return Err(Error::shape(format!(
            "match_assignment: {} estimates vs {} references",
            est.len(),
            truth.len()
        )));
    }
    let k = truth.len();
    if k == 0 || k > 8 {
        return Err(Error::shape("match_assignment: need 1 <= K <= 8"));
    }
    Ok(min_cost_assignment(k, |i, j| {
        let d = wrapped_distance(est[j], truth[i], delta);
        d * d
    }))
}

/// Signed wrapped errors of the optimally matched estimates, in reference
/// order.
pub fn match_and_wrap(est: &[f64], truth: &[f64], delta: f64) -> Result<Vec<f64>> {
    let perm = match_assignment(est, truth, delta)?;
    Ok((0..truth.len())
        .map(|i| wrap_angle(est[perm[i]] - truth[i], delta))
        .collect())
}
