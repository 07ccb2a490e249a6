//! Scenario description and snapshot generation for a uniform linear array:
//! steering vectors, population and sample covariances, subarray row
//! selection, and seeded complex Gaussian snapshot synthesis.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matkern::{hermitian_eig, CMatrix};
use crate::Result;

/// How the source signal matrix is synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// `S = (scale * P)^{1/2} (W W^H / T)^{-1/2} W`, so the empirical power
    /// `S S^H / T` equals `scale * P` exactly and the signal-side spike
    /// positions are identical across seeds.
    #[default]
    ExactPower,
    /// Plain i.i.d. columns, `S = (scale * P)^{1/2} W`.
    Iid,
}

/// Subarray selection: two row windows of length `n`, `delta` apart, the
/// first anchored at 1-based row `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subarray {
    pub n: usize,
    pub delta: usize,
    #[serde(default = "default_start")]
    pub start: usize,
}

fn default_start() -> usize {
    1
}

/// Fully resolved deterministic description of one experiment.
#[derive(Debug, Clone)]
pub struct UlaScenario {
    /// Sensor count N.
    pub n: usize,
    /// Snapshot count T.
    pub t: usize,
    /// Source count K.
    pub k: usize,
    /// Source angles in radians (Fourier-space).
    pub thetas: Vec<f64>,
    /// Base K x K Hermitian PSD signal power matrix.
    pub p: CMatrix,
    pub subarray: Subarray,
    /// Linear relative-SNR multiplier applied to `p`.
    pub snr_scale: f64,
    pub signal_mode: SignalMode,
}

impl UlaScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("scenario: N must be positive"));
        }
        if self.t == 0 || self.t < self.k {
            return Err(Error::config("scenario: need T >= max(K, 1)"));
        }
        if self.thetas.len() != self.k {
            return Err(Error::config(format!(
                "scenario: {} angles given for K = {}",
                self.thetas.len(),
                self.k
            )));
        }
        for &th in &self.thetas {
            if !th.is_finite() || !(-std::f64::consts::PI..std::f64::consts::PI).contains(&th) {
                return Err(Error::config(format!(
                    "scenario: angle {th} outside [-pi, pi)"
                )));
            }
        }
        let sa = &self.subarray;
        if sa.start < 1 {
            return Err(Error::config("scenario: subarray start must be >= 1"));
        }
        if sa.delta < 1 {
            return Err(Error::config("scenario: subarray delta must be >= 1"));
        }
        if sa.n + sa.delta + sa.start - 1 > self.n {
            return Err(Error::config(format!(
                "scenario: subarray n + delta + start - 1 = {} exceeds N = {}",
                sa.n + sa.delta + sa.start - 1,
                self.n
            )));
        }
        if self.k > sa.n {
            return Err(Error::config("scenario: need K <= subarray n"));
        }
        if self.p.rows() != self.k || self.p.cols() != self.k {
            return Err(Error::config("scenario: P must be K x K"));
        }
        if !self.p.all_finite() {
            return Err(Error::config("scenario: P has non-finite entries"));
        }
        if self.k > 0 {
            let scale = self.p.max_abs().max(1.0);
            if self.p.hermitian_defect() > 1e-9 * scale {
                return Err(Error::config("scenario: P is not Hermitian"));
            }
            let spec = hermitian_eig(&self.p.symmetrized())?;
            if spec.values[self.k - 1] < -1e-9 * scale {
                return Err(Error::config("scenario: P is not positive semidefinite"));
            }
        }
        if !self.snr_scale.is_finite() || self.snr_scale < 0.0 {
            return Err(Error::config("scenario: snr_scale must be finite and >= 0"));
        }
        Ok(())
    }

    /// `snr_scale * P`.
    pub fn scaled_p(&self) -> CMatrix {
        self.p.scaled(Complex64::new(self.snr_scale, 0.0))
    }

    /// Aspect ratio c = N/T.
    pub fn aspect_ratio(&self) -> f64 {
        self.n as f64 / self.t as f64
    }

    /// Subarray fraction tau = n/N.
    pub fn tau(&self) -> f64 {
        self.subarray.n as f64 / self.n as f64
    }

    /// Steering matrix A with one column per source.
    pub fn steering(&self) -> CMatrix {
        steering_matrix(&self.thetas, self.n)
    }

    pub fn window(&self) -> SelectionWindow {
        SelectionWindow {
            start: self.subarray.start,
            length: self.subarray.n,
            shift: self.subarray.delta,
        }
    }
}

/// Row-slice description of the two subarray selections (1-based `start`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionWindow {
    pub start: usize,
    pub length: usize,
    pub shift: usize,
}

impl SelectionWindow {
    pub fn validate_for(&self, rows: usize) -> Result<()> {
        if self.start < 1 {
            return Err(Error::shape("selection window: start must be >= 1"));
        }
        if self.start + self.length + self.shift - 1 > rows {
            return Err(Error::shape(format!(
                "selection window start {} + length {} + shift {} - 1 exceeds {} rows",
                self.start, self.length, self.shift, rows
            )));
        }
        Ok(())
    }
}

/// Which of the two shifted windows to slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowHalf {
    First,
    Second,
}

/// Rows `[start, start+length)` (first) or `[start+shift, start+shift+length)`
/// (second) of `m`, equal to the corresponding selection-matrix product.
pub fn subarray_rows(m: &CMatrix, w: &SelectionWindow, which: WindowHalf) -> Result<CMatrix> {
    w.validate_for(m.rows())?;
    let offset = match which {
        WindowHalf::First => w.start - 1,
        WindowHalf::Second => w.start - 1 + w.shift,
    };
    m.row_window(offset, w.length)
}

/// Unit-norm steering vector: entry k (0-based) is `exp(i k theta) / sqrt(N)`.
pub fn steering_vector(theta: f64, n: usize) -> Result<Vec<Complex64>> {
    if n == 0 {
        return Err(Error::domain("steering_vector: N must be positive"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok((0..n)
        .map(|k| Complex64::from_polar(scale, k as f64 * theta))
        .collect())
}

pub fn steering_matrix(thetas: &[f64], n: usize) -> CMatrix {
    let cols: Vec<Vec<Complex64>> = thetas
        .iter()
        .map(|&th| steering_vector(th, n).expect("N checked by caller"))
        .collect();
    CMatrix::from_fn(n, thetas.len(), |i, j| cols[j][i])
}

/// Population covariance `C = A (scale * P) A^H + I`.
pub fn population_covariance(s: &UlaScenario) -> Result<CMatrix> {
    s.validate()?;
    let mut c = CMatrix::identity(s.n);
    if s.k > 0 {
        let a = s.steering();
        let ap = a.mul(&s.scaled_p());
        let apa = ap.mul(&a.adjoint());
        c = c.add(&apa).symmetrized();
    }
    Ok(c)
}

/// Snapshot matrix X with its reproducibility seed.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    pub x: CMatrix,
    pub seed: u64,
}

const WHITENING_MIN_EIG: f64 = 1e-12;
const DRAW_RETRIES: usize = 8;

/// Draws `X = A S + noise` with i.i.d. circular complex Gaussian noise.
///
/// Deterministic per (scenario, seed): the same pair always yields a
/// bit-identical matrix.
pub fn generate_snapshots(s: &UlaScenario, seed: u64) -> Result<SnapshotMatrix> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let signal = if s.k == 0 {
        None
    } else {
        let sqrt_p = psd_sqrt(&s.scaled_p())?;
        let src = match s.signal_mode {
            SignalMode::Iid => {
                let w = complex_gaussian(&mut rng, s.k, s.t);
                sqrt_p.mul(&w)
            }
            SignalMode::ExactPower => {
                let mut whitened = None;
                for _ in 0..DRAW_RETRIES {
                    let w = complex_gaussian(&mut rng, s.k, s.t);
                    let gram = w
                        .mul(&w.adjoint())
                        .scaled(Complex64::new(1.0 / s.t as f64, 0.0))
                        .symmetrized();
                    match psd_inv_sqrt(&gram, WHITENING_MIN_EIG) {
                        Some(gram_inv_sqrt) => {
                            whitened = Some(gram_inv_sqrt.mul(&w));
                            break;
                        }
                        None => continue,
                    }
                }
                let w_white = whitened.ok_or_else(|| {
                    Error::numerical("generate_snapshots: whitening stayed singular after retries")
                })?;
                sqrt_p.mul(&w_white)
            }
        };
        Some(src)
    };

    let mut x = complex_gaussian(&mut rng, s.n, s.t);
    if let Some(src) = signal {
        let a = s.steering();
        let contrib = a.mul(&src);
        x = x.add(&contrib);
    }
    Ok(SnapshotMatrix { x, seed })
}

/// Sample covariance `X X^H / T`, symmetrized.
pub fn sample_covariance(x: &CMatrix) -> CMatrix {
    let n = x.rows();
    let t = x.cols();
    assert!(t >= 1, "sample_covariance: need at least one snapshot");
    let inv_t = 1.0 / t as f64;
    let mut c = CMatrix::zeros(n, n);
    for i in 0..n {
        let ri = x.row(i);
        for j in i..n {
            let rj = x.row(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for t_idx in 0..t {
                acc += ri[t_idx] * rj[t_idx].conj();
            }
            acc *= inv_t;
            if i == j {
                c[(i, i)] = Complex64::new(acc.re, 0.0);
            } else {
                c[(i, j)] = acc;
                c[(j, i)] = acc.conj();
            }
        }
    }
    c
}

/// Seed for an order-independent per-trial substream (SplitMix64 over the
/// master seed and trial index).
pub fn substream_seed(master_seed: u64, trial_index: u64) -> u64 {
    let z = master_seed ^ splitmix64(trial_index.wrapping_add(0x9E37_79B9_7F4A_7C15));
    splitmix64(z)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Matrix of i.i.d. CN(0,1) entries (real and imaginary parts N(0, 1/2)).
fn complex_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        data.push(Complex64::new(re * scale, im * scale));
    }
    CMatrix::from_row_major(rows, cols, data).expect("sized above")
}

/// Hermitian PSD square root via eigendecomposition (small matrices).
pub(crate) fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let spec = hermitian_eig(&m.symmetrized())?;
    let k = m.rows();
    let mut out = CMatrix::zeros(k, k);
    for (idx, &lam) in spec.values.iter().enumerate() {
        let root = lam.max(0.0).sqrt();
        if root == 0.0 {
            continue;
        }
        let v = spec.vectors.col(idx);
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] += root * v[i] * v[j].conj();
            }
        }
    }
    Ok(out)
}

/// Hermitian PSD inverse square root; `None` when any eigenvalue falls at or
/// below `min_eig`.
pub(crate) fn psd_inv_sqrt(m: &CMatrix, min_eig: f64) -> Option<CMatrix> {
    let spec = hermitian_eig(&m.symmetrized()).ok()?;
    let k = m.rows();
    if spec.values.iter().any(|&l| l <= min_eig) {
        return None;
    }
    let mut out = CMatrix::zeros(k, k);
    for (idx, &lam) in spec.values.iter().enumerate() {
        let root = 1.0 / lam.sqrt();
        let v = spec.vectors.col(idx);
        for i in 0..k {
            for j in 0..k {
                out[(i, j)] += root * v[i] * v[j].conj();
            }
        }
    }
    Some(out)
}
