//! Deterministic asymptotic theory for spiked sample covariance matrices:
//! Marčenko–Pastur support and Stieltjes transform, spike forward/inverse
//! maps, eigenvector shrinkage factors, the large-array limit of the ESPRIT
//! rotation matrices, phase-transition thresholds, closed-form steering
//! overlaps, and the closely-spaced non-consistency functional.

use num_complex::Complex64;

use crate::error::Error;
use crate::estimators::{match_assignment, wrap_angle};
use crate::matkern::{general_eig_small, hermitian_eig, solve, CMatrix};
use crate::sigmodel::{psd_sqrt, subarray_rows, UlaScenario, WindowHalf};
use crate::Result;

/// Shrinkage clamp for sources flagged below the detection threshold. Keeps
/// debiasing finite across a phase-transition sweep while the flag marks the
/// estimate as invalid.
pub const EPS_G: f64 = 1e-6;

/// Condition-number cutoff beyond which a rotation-equation solve is refused.
pub const COND_LIMIT: f64 = 1e12;

/// Aspect ratio plus the descending spike strengths of a spiked covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeModel {
    pub c: f64,
    pub ells: Vec<f64>,
}

impl SpikeModel {
    pub fn new(c: f64, ells: Vec<f64>) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::domain("SpikeModel: c must be positive"));
        }
        for w in ells.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::domain("SpikeModel: spikes must be strictly descending"));
            }
        }
        if ells.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::domain("SpikeModel: spikes must be positive"));
        }
        Ok(SpikeModel { c, ells })
    }

    /// Whether spike k rises above the detectability threshold `sqrt(c)`.
    pub fn separated(&self, k: usize) -> bool {
        self.ells[k] > self.c.sqrt()
    }

    pub fn all_separated(&self) -> bool {
        (0..self.ells.len()).all(|k| self.separated(k))
    }
}

/// Support edges `E± = (1 ± sqrt(c))^2` of the noise bulk.
pub fn mp_support(c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain("mp_support: c must be positive"));
    }
    let r = c.sqrt();
    Ok(((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r)))
}

/// Stieltjes transform of the limiting noise-bulk spectral law: the root of
/// `z c m^2 - (1 - c - z) m + 1 = 0` on the Stieltjes branch
/// (`Im(m) Im(z) > 0` off the real axis, `m ~ -1/z` for large real `z`).
pub fn mp_stieltjes(z: Complex64, c: f64) -> Result<Complex64> {
    let (e_minus, e_plus) = mp_support(c)?;
    if z.norm() == 0.0 {
        return Err(Error::domain("mp_stieltjes: z = 0 excluded"));
    }
    let m = if z.im == 0.0 {
        let x = z.re;
        if (e_minus..=e_plus).contains(&x) {
            return Err(Error::domain(format!(
                "mp_stieltjes: real z = {x} inside the support [{e_minus}, {e_plus}]"
            )));
        }
        // (1-c-x)^2 - 4xc factors as (x - E-)(x - E+), nonnegative here.
        let q = 1.0 - c - x;
        let disc = (x - e_minus) * (x - e_plus);
        let sq = disc.max(0.0).sqrt();
        let sign = if x > e_plus { 1.0 } else { -1.0 };
        // Evaluate the cancellation-free root first; recover the other from
        // the root product 1/(xc).
        let big = q + q.signum() * sq;
        let val = if q.signum() == sign {
            big / (2.0 * x * c)
        } else {
            2.0 / big
        };
        Complex64::new(val, 0.0)
    } else {
        let one = Complex64::new(1.0, 0.0);
        let b = one * (1.0 - c) - z;
        let disc = b * b - 4.0 * z * c;
        let sq = disc.sqrt();
        // Root with the larger magnitude is cancellation-free; the companion
        // follows from the product b^2 ... = 1/(zc).
        let sq_aligned = if (b.conj() * sq).re >= 0.0 { sq } else { -sq };
        let m_big = (b + sq_aligned) / (2.0 * z * c);
        let m_small = Complex64::new(1.0, 0.0) / (z * c * m_big);
        if m_big.im * z.im > 0.0 {
            m_big
        } else {
            m_small
        }
    };
    let residual = (z * c * m * m - (Complex64::new(1.0 - c, 0.0) - z) * m
        + Complex64::new(1.0, 0.0))
    .norm();
    if residual > 1e-10 {
        return Err(Error::numerical(format!(
            "mp_stieltjes: branch residual {residual:.3e}"
        )));
    }
    Ok(m)
}

/// Limiting position of a detectable spike: `1 + ell + c (1 + ell) / ell`.
pub fn spike_forward(ell: f64, c: f64) -> Result<f64> {
    if !(ell > 0.0) {
        return Err(Error::domain("spike_forward: ell must be positive"));
    }
    if c < 0.0 || !c.is_finite() {
        return Err(Error::domain("spike_forward: c must be nonnegative"));
    }
    Ok(1.0 + ell + c * (1.0 + ell) / ell)
}

/// Inverts the spike map: `ell = ((l - 1 - c) + sqrt((l - 1 - c)^2 - 4c)) / 2`
/// for an observed top eigenvalue beyond the bulk edge; `None` flags a value
/// at or below the detectability threshold.
pub fn spike_inverse(lambda_hat: f64, c: f64) -> Option<f64> {
    if c < 0.0 || !c.is_finite() || !lambda_hat.is_finite() {
        return None;
    }
    let r = c.sqrt();
    let e_plus = (1.0 + r) * (1.0 + r);
    if lambda_hat <= e_plus {
        return None;
    }
    let t = lambda_hat - 1.0 - c;
    let disc = t * t - 4.0 * c;
    if disc <= 0.0 {
        return None;
    }
    let ell = 0.5 * (t + disc.sqrt());
    (ell > r).then_some(ell)
}

/// Asymptotic shrinkage of sample-eigenvector projections onto population
/// directions: `(1 - c / ell^2) / (1 + c / ell)`, clamped to zero at and
/// below the detectability threshold. Strictly increasing in `ell` and equal
/// to one when `c = 0`.
pub fn bias_factor(ell: f64, c: f64) -> f64 {
    if !(ell > 0.0) || c < 0.0 {
        return 0.0;
    }
    if ell * ell <= c {
        return 0.0;
    }
    ((1.0 - c / (ell * ell)) / (1.0 + c / ell)).clamp(0.0, 1.0)
}

/// Population-side subspace data of a scenario: the top-K eigenvectors of
/// the noise-free covariance, the finite-N spike strengths, and the two
/// rotation matrices built from the subarray windows.
#[derive(Debug, Clone)]
pub struct PopulationSubspace {
    /// N x K orthonormal signal-subspace basis, descending spike order.
    pub u: CMatrix,
    /// Finite-N spike strengths (eigenvalues of the noise-free covariance).
    pub ells: Vec<f64>,
    /// `U^H J1^H J1 U`.
    pub phi1: CMatrix,
    /// `U^H J1^H J2 U`.
    pub phi2: CMatrix,
    /// `phi1^{-1} phi2`.
    pub phi: CMatrix,
}

/// Builds the population rotation pair. The signal subspace is computed from
/// the K x K Gram matrix `(sP)^{1/2} A^H A (sP)^{1/2}`, which is exact and
/// cheap even for large arrays.
pub fn population_phi(s: &UlaScenario) -> Result<PopulationSubspace> {
    s.validate()?;
    if s.k == 0 {
        return Err(Error::domain("population_phi: need at least one source"));
    }
    let (ells, u) = signal_subspace(s)?;
    let w = s.window();
    let u1 = subarray_rows(&u, &w, WindowHalf::First)?;
    let u2 = subarray_rows(&u, &w, WindowHalf::Second)?;
    let phi1 = u1.adjoint().mul(&u1).symmetrized();
    let phi2 = u1.adjoint().mul(&u2);
    let cond = hermitian_condition(&phi1)?;
    if cond > COND_LIMIT {
        return Err(Error::Singular(format!(
            "population_phi: rotation Gram matrix condition {cond:.3e}"
        )));
    }
    let phi = solve(&phi1, &phi2)?;
    Ok(PopulationSubspace {
        u,
        ells,
        phi1,
        phi2,
        phi,
    })
}

/// Finite-N spike strengths and the orthonormal signal subspace, via the
/// K x K Gram factorization of `A (sP) A^H = B B^H`, `B = A (sP)^{1/2}`.
pub fn signal_subspace(s: &UlaScenario) -> Result<(Vec<f64>, CMatrix)> {
    let a = s.steering();
    let sqrt_p = psd_sqrt(&s.scaled_p())?;
    let b = a.mul(&sqrt_p);
    let gram = b.adjoint().mul(&b).symmetrized();
    let spec = hermitian_eig(&gram)?;
    let floor = spec.values[0].abs().max(1.0) * 1e-12;
    if spec.values.iter().any(|&mu| mu <= floor) {
        return Err(Error::domain(
            "signal_subspace: rank-deficient signal (a spike strength is numerically zero)",
        ));
    }
    let mut u = CMatrix::zeros(s.n, s.k);
    for k in 0..s.k {
        let v = spec.vectors.col(k);
        let bv = b.matvec(&v);
        let inv_root = 1.0 / spec.values[k].sqrt();
        for i in 0..s.n {
            u[(i, k)] = bv[i] * inv_root;
        }
    }
    Ok((spec.values, u))
}

/// Ratio of extreme eigenvalues of a Hermitian PSD matrix.
pub(crate) fn hermitian_condition(m: &CMatrix) -> Result<f64> {
    let spec = hermitian_eig(&m.symmetrized())?;
    let top = spec.values[0].abs();
    let bottom = spec.values[spec.values.len() - 1].abs();
    if bottom <= f64::MIN_POSITIVE {
        return Ok(f64::INFINITY);
    }
    Ok(top / bottom)
}

/// Applies the shrinkage map to a population rotation pair:
/// `phi1_bar = diag(sqrt g) phi1 diag(sqrt g) + tau (I - diag(g))`,
/// `phi2_bar = diag(sqrt g) phi2 diag(sqrt g)`.
pub fn predicted_phi_bar(
    phi1: &CMatrix,
    phi2: &CMatrix,
    g: &[f64],
    tau: f64,
) -> (CMatrix, CMatrix) {
    let k = phi1.rows();
    assert_eq!(g.len(), k);
    let mut bar1 = CMatrix::from_fn(k, k, |i, j| phi1[(i, j)] * (g[i].sqrt() * g[j].sqrt()));
    for i in 0..k {
        bar1[(i, i)] += Complex64::new(tau * (1.0 - g[i]), 0.0);
    }
    let bar2 = CMatrix::from_fn(k, k, |i, j| phi2[(i, j)] * (g[i].sqrt() * g[j].sqrt()));
    (bar1, bar2)
}

/// Deterministic prediction of the large-array behavior of a scenario.
#[derive(Debug, Clone)]
pub struct TheoryPrediction {
    pub phi_bar_1: CMatrix,
    pub phi_bar_2: CMatrix,
    /// Predicted estimator limits, index-aligned with the scenario sources.
    pub theta_bar: Vec<f64>,
    /// Shrinkage factors by descending spike order.
    pub g: Vec<f64>,
    /// Predicted top sample eigenvalues by descending spike order (bulk edge
    /// for flagged spikes).
    pub lambda_bar: Vec<f64>,
    /// Flags spikes at or below the detectability threshold.
    pub below_threshold: Vec<bool>,
}

/// Predicted estimator limit of the classical subspace rotation method.
pub fn predicted_angles(s: &UlaScenario) -> Result<TheoryPrediction> {
    predicted_angles_with_c(s, None)
}

/// Same as [`predicted_angles`] with the aspect ratio overridden (a zero
/// override reproduces the population-exact angles).
pub fn predicted_angles_with_c(s: &UlaScenario, c_override: Option<f64>) -> Result<TheoryPrediction> {
    let pop = population_phi(s)?;
    let c = c_override.unwrap_or_else(|| s.aspect_ratio());
    if c < 0.0 || !c.is_finite() {
        return Err(Error::domain("predicted_angles: c must be nonnegative"));
    }
    let tau = s.tau();
    let delta = s.subarray.delta as f64;
    let threshold = c.sqrt();

    let k = s.k;
    let mut g = Vec::with_capacity(k);
    let mut lambda_bar = Vec::with_capacity(k);
    let mut below = Vec::with_capacity(k);
    for &ell in &pop.ells {
        let is_below = ell <= threshold;
        below.push(is_below);
        if is_below {
            g.push(EPS_G);
            lambda_bar.push(if c > 0.0 {
                (1.0 + threshold) * (1.0 + threshold)
            } else {
                1.0 + ell
            });
        } else {
            g.push(bias_factor(ell, c).max(EPS_G));
            lambda_bar.push(spike_forward(ell, c)?);
        }
    }

    let (bar1, bar2) = predicted_phi_bar(&pop.phi1, &pop.phi2, &g, tau);
    let cond = hermitian_condition(&bar1)?;
    if cond > COND_LIMIT {
        return Err(Error::Singular(format!(
            "predicted_angles: shrunk Gram matrix condition {cond:.3e}"
        )));
    }
    let phi_bar = solve(&bar1, &bar2)?;
    let eigs = general_eig_small(&phi_bar)?;
    let raw: Vec<f64> = eigs
        .values
        .iter()
        .map(|lam| wrap_angle(lam.arg() / delta, delta))
        .collect();
    let perm = match_assignment(&raw, &s.thetas, delta)?;
    let theta_bar: Vec<f64> = (0..k).map(|i| raw[perm[i]]).collect();

    Ok(TheoryPrediction {
        phi_bar_1: bar1,
        phi_bar_2: bar2,
        theta_bar,
        g,
        lambda_bar,
        below_threshold: below,
    })
}

/// Closed-form large-array limits of the steering overlap matrices.
#[derive(Debug, Clone)]
pub struct SteeringOverlaps {
    /// Limit of `A^H A`.
    pub gram: CMatrix,
    /// Limit of `A^H J1^H J1 A`.
    pub windowed: CMatrix,
    /// Limit of `A^H J1^H J2 A`.
    pub shifted: CMatrix,
}

/// Limits for well-separated fixed angles: `gram = I`, `windowed = tau I`,
/// `shifted = tau diag(exp(i dtheta_k))` where `dtheta_k` is the subarray
/// shift times the source angle.
pub fn steering_overlap_widely(dthetas: &[f64], tau: f64) -> Result<SteeringOverlaps> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::domain("steering_overlap_widely: tau outside [0, 1]"));
    }
    let k = dthetas.len();
    let gram = CMatrix::identity(k);
    let windowed = CMatrix::identity(k).scaled(Complex64::new(tau, 0.0));
    let mut shifted = CMatrix::zeros(k, k);
    for (i, &dt) in dthetas.iter().enumerate() {
        shifted[(i, i)] = Complex64::from_polar(tau, dt);
    }
    Ok(SteeringOverlaps {
        gram,
        windowed,
        shifted,
    })
}

/// Eigenstructure of the closely-spaced two-source steering Gram limit.
#[derive(Debug, Clone)]
pub struct CloselyGramEigens {
    /// `1 + |sinc(alpha/2)|` and `1 - |sinc(alpha/2)|`.
    pub values: (f64, f64),
    /// `[exp(i alpha/2), +1] / sqrt(2)` and `[exp(i alpha/2), -1] / sqrt(2)`.
    pub v_plus: Vec<Complex64>,
    pub v_minus: Vec<Complex64>,
}

/// Limits for two sources spaced `alpha / N` apart. `dtheta1`, `dtheta2` are
/// the subarray shift times the two source angles. The off-diagonal window
/// overlap is `tau exp(i alpha tau / 2) sinc(alpha tau / 2)`, equal to
/// `(1 - exp(i alpha tau)) / (-i alpha)`.
pub fn steering_overlap_closely(
    alpha: f64,
    tau: f64,
    dtheta1: f64,
    dtheta2: f64,
) -> Result<(SteeringOverlaps, CloselyGramEigens)> {
    if !(alpha > 0.0) {
        return Err(Error::domain("steering_overlap_closely: alpha must be positive"));
    }
    if !(0.0 < tau && tau <= 1.0) {
        return Err(Error::domain("steering_overlap_closely: tau outside (0, 1]"));
    }
    let s = sinc(alpha / 2.0);
    let off_gram = Complex64::from_polar(1.0, alpha / 2.0) * s;
    let gram = CMatrix::from_row_major(
        2,
        2,
        vec![
            Complex64::new(1.0, 0.0),
            off_gram,
            off_gram.conj(),
            Complex64::new(1.0, 0.0),
        ],
    )?;
    let beta = Complex64::from_polar(tau, alpha * tau / 2.0) * sinc(alpha * tau / 2.0);
    let windowed = CMatrix::from_row_major(
        2,
        2,
        vec![
            Complex64::new(tau, 0.0),
            beta,
            beta.conj(),
            Complex64::new(tau, 0.0),
        ],
    )?;
    let e1 = Complex64::from_polar(1.0, dtheta1);
    let e2 = Complex64::from_polar(1.0, dtheta2);
    let shifted = CMatrix::from_row_major(
        2,
        2,
        vec![
            Complex64::new(tau, 0.0) * e1,
            beta * e2,
            beta.conj() * e1,
            Complex64::new(tau, 0.0) * e2,
        ],
    )?;
    let sa = s.abs();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let top = Complex64::from_polar(inv_sqrt2, alpha / 2.0);
    let eigens = CloselyGramEigens {
        values: (1.0 + sa, 1.0 - sa),
        v_plus: vec![top, Complex64::new(inv_sqrt2, 0.0)],
        v_minus: vec![top, Complex64::new(-inv_sqrt2, 0.0)],
    };
    Ok((
        SteeringOverlaps {
            gram,
            windowed,
            shifted,
        },
        eigens,
    ))
}

/// Relative-SNR detection threshold of each source mode: `sqrt(c) / mu_k`
/// for `mu_k` the descending eigenvalues of `P^{1/2} A^H A P^{1/2}` (base
/// power, before the SNR multiplier).
#[derive(Debug, Clone, Copy)]
pub struct Threshold {
    pub snr_scale: f64,
    pub db: f64,
}

pub fn phase_transition_threshold(s: &UlaScenario) -> Result<Vec<Threshold>> {
    s.validate()?;
    if s.k == 0 {
        return Err(Error::domain("phase_transition_threshold: no sources"));
    }
    let a = s.steering();
    let sqrt_p = psd_sqrt(&s.p)?;
    let gram = sqrt_p.mul(&a.adjoint().mul(&a)).mul(&sqrt_p).symmetrized();
    let spec = hermitian_eig(&gram)?;
    let c = s.aspect_ratio();
    let root = c.sqrt();
    spec.values
        .iter()
        .map(|&mu| {
            if mu <= f64::MIN_POSITIVE {
                return Err(Error::domain(
                    "phase_transition_threshold: rank-deficient source mode",
                ));
            }
            let scale = root / mu;
            Ok(Threshold {
                snr_scale: scale,
                db: 10.0 * scale.log10(),
            })
        })
        .collect()
}

/// `sin(t) / t`, continuous at zero.
pub fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 6.0
    } else {
        t.sin() / t
    }
}

/// Non-consistency functional of the classical estimator for two equal-power
/// sources spaced `alpha / N` apart:
/// `kappa = tau (4 - c sinc^2(a/2)) +
///   (sinc(a/2) - (2/a) sin(a/2 - a tau)) ((c+3)|sinc(a/2)| - |sinc(a/2)|^3)`.
/// Positive on its domain and zero at `tau = 0`.
pub fn kappa_nonconsistency(alpha: f64, tau: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain("kappa: alpha must be positive"));
    }
    if !(0.0 < tau && tau < 1.0) {
        return Err(Error::domain("kappa: tau outside (0, 1)"));
    }
    if !(0.0 < c && c < 1.0) {
        return Err(Error::domain("kappa: c outside (0, 1)"));
    }
    let s = sinc(alpha / 2.0);
    if s.abs() >= 1.0 - c.sqrt() {
        return Err(Error::domain(
            "kappa: |sinc(alpha/2)| must stay below 1 - sqrt(c) (subspace separation)",
        ));
    }
    let sa = s.abs();
    let first = tau * (4.0 - c * s * s);
    let second =
        (s - (2.0 / alpha) * (alpha / 2.0 - alpha * tau).sin()) * ((c + 3.0) * sa - sa * sa * sa);
    Ok(first + second)
}
