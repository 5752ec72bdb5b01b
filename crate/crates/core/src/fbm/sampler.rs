use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::covariance::{covariance_matrix, unit_fgn_autocovariance};
use super::{HurstParam, RngSpec, SamplePath, TimeGrid};
use crate::error::{parameter, Error, Result};

/// Largest grid (in points, including `t = 0`) the Cholesky sampler accepts by default.
pub const DEFAULT_CHOLESKY_CAP: usize = 4096;

/// Relative tolerance on negative circulant eigenvalues.
const EIGENVALUE_TOL: f64 = 1e-10;

/// Diagonal jitter for the single Cholesky retry.
const CHOLESKY_JITTER: f64 = 1e-12;

/// Anything that can draw a path on a fixed grid from a seeded generator.
///
/// Estimators in [`crate::exit`] only see this trait, so deterministic stubs
/// can stand in for the Gaussian samplers.
pub trait PathSource: Sync {
    fn grid(&self) -> &Arc<TimeGrid>;

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<SamplePath>;
}

/// Exact sampler via the Cholesky factor of the covariance matrix.
///
/// Cubic setup and quadratic per-path cost; intended for irregular or small grids.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: Arc<TimeGrid>,
    /// Packed lower-triangular factor, row by row.
    factor: Vec<f64>,
    dim: usize,
}

impl CholeskySampler {
    pub fn new(h: HurstParam, grid: TimeGrid) -> Result<Self> {
        Self::with_cap(h, grid, DEFAULT_CHOLESKY_CAP)
    }

    pub fn with_cap(h: HurstParam, grid: TimeGrid, cap: usize) -> Result<Self> {
        if grid.len() > cap {
            return Err(Error::GridTooLarge {
                points: grid.len(),
                cap,
            });
        }
        let cov = covariance_matrix(h, &grid);
        let dim = cov.nrows();
        let lower = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let jittered = &cov + DMatrix::<f64>::identity(dim, dim) * CHOLESKY_JITTER;
                match jittered.cholesky() {
                    Some(c) => c.l(),
                    None => {
                        let min_eigenvalue = cov.symmetric_eigenvalues().min();
                        return Err(Error::Factorization { min_eigenvalue });
                    }
                }
            }
        };
        let mut factor = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                factor.push(lower[(i, j)]);
            }
        }
        Ok(Self {
            grid: Arc::new(grid),
            factor,
            dim,
        })
    }
}

impl PathSource for CholeskySampler {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = Vec::with_capacity(self.dim + 1);
        values.push(0.0);
        let mut offset = 0;
        for i in 0..self.dim {
            let row = &self.factor[offset..offset + i + 1];
            values.push(row.iter().zip(&z).map(|(l, z)| l * z).sum());
            offset += i + 1;
        }
        SamplePath::new(self.grid.clone(), values)
    }
}

/// One exact draw on an arbitrary grid via Cholesky factorization.
pub fn sample_cholesky(h: HurstParam, grid: &TimeGrid, rng: RngSpec) -> Result<SamplePath> {
    CholeskySampler::new(h, grid.clone())?.sample(&mut rng.rng())
}

/// Exact sampler on a uniform grid: circulant embedding of the fractional
/// Gaussian noise autocovariance, diagonalized by an FFT of length `2n`.
pub struct CirculantSampler {
    grid: Arc<TimeGrid>,
    n: usize,
    /// `sqrt(λ_k / (2n))` for `k = 0..=n`.
    amplitude: Vec<f64>,
    /// `step^H`, mapping unit-step noise to the grid step.
    step_scale: f64,
    fft: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for CirculantSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantSampler")
            .field("n", &self.n)
            .field("horizon", &self.grid.horizon())
            .finish()
    }
}

impl CirculantSampler {
    /// `n` increments on `[0, horizon]`; `n` must be a power of two, at least 2.
    pub fn new(h: HurstParam, n: usize, horizon: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(parameter(format!(
                "circulant grid size must be a power of two >= 2, got {n}"
            )));
        }
        let grid = TimeGrid::uniform(n, horizon)?;
        let two_h = h.twice();
        let len = 2 * n;
        let mut row: Vec<Complex<f64>> = (0..len)
            .map(|k| {
                let lag = if k <= n { k } else { len - k };
                Complex::new(unit_fgn_autocovariance(two_h, lag as u64), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(len);
        fft.process(&mut row);

        let largest = row.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let mut amplitude = Vec::with_capacity(n + 1);
        for (index, c) in row.iter().take(n + 1).enumerate() {
            let mut lambda = c.re;
            if lambda < 0.0 {
                if lambda < -EIGENVALUE_TOL * largest {
                    return Err(Error::NegativeEigenvalue {
                        index,
                        value: lambda,
                        largest,
                    });
                }
                lambda = 0.0;
            }
            amplitude.push((lambda / len as f64).sqrt());
        }
        let step_scale = h.scale(horizon / n as f64);
        let scratch_len = fft.get_inplace_scratch_len();
        Ok(Self {
            grid: Arc::new(grid),
            n,
            amplitude,
            step_scale,
            fft,
            scratch_len,
        })
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    /// Unit-step fractional Gaussian noise of length `n`, written into `noise`.
    fn fill_noise(&self, rng: &mut ChaCha8Rng, noise: &mut Vec<f64>) {
        let n = self.n;
        let len = 2 * n;
        let mut w = vec![Complex::new(0.0, 0.0); len];
        w[0] = Complex::new(self.amplitude[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
        w[n] = Complex::new(self.amplitude[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for k in 1..n {
            let a = self.amplitude[k] * half;
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            w[k] = Complex::new(a * re, a * im);
            w[len - k] = w[k].conj();
        }
        let mut scratch = vec![Complex::new(0.0, 0.0); self.scratch_len];
        self.fft.process_with_scratch(&mut w, &mut scratch);
        noise.clear();
        noise.extend(w[..n].iter().map(|c| c.re));
    }
}

impl PathSource for CirculantSampler {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
        let mut noise = Vec::with_capacity(self.n);
        self.fill_noise(rng, &mut noise);
        let mut values = Vec::with_capacity(self.n + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for x in noise {
            acc += x * self.step_scale;
            values.push(acc);
        }
        SamplePath::new(self.grid.clone(), values)
    }
}

/// One exact draw of `n + 1` uniform points on `[0, horizon]` by circulant embedding.
pub fn sample_circulant(
    h: HurstParam,
    n: usize,
    horizon: f64,
    rng: RngSpec,
) -> Result<SamplePath> {
    CirculantSampler::new(h, n, horizon)?.sample(&mut rng.rng())
}
