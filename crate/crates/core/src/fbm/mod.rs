//! Fractional Brownian motion: parameters, grids, exact samplers and
//! pathwise functionals.

pub(crate) mod covariance;
pub(crate) mod functionals;
mod sampler;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use covariance::{
    covariance_matrix, fbm_covariance, fgn_autocovariance, gaussian_abs_moment,
};
pub use functionals::{holder_modulus, sup_and_argmax};
pub use sampler::{
    sample_cholesky, sample_circulant, CholeskySampler, CirculantSampler, PathSource,
    DEFAULT_CHOLESKY_CAP,
};

/// Hurst index `H`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// The covariance exponent `2H`.
    #[inline]
    pub fn twice(self) -> f64 {
        2.0 * self.0
    }

    /// `c^H`, the self-similar scale factor for a time dilation by `c`.
    #[inline]
    pub fn scale(self, c: f64) -> f64 {
        pow_nonneg(c, self.0)
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// `x^e` for `x >= 0`, evaluated as `exp(e ln x)` with `0^e = 0`.
#[inline]
pub(crate) fn pow_nonneg(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (e * x.ln()).exp()
    }
}

/// Ordered discretization of `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    /// Validates an explicit list of times: starts at 0, strictly increasing,
    /// finite, and at least two points long.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::InvalidGrid(format!(
                    "points must be finite and strictly increasing (index {})",
                    i + 1
                )));
            }
        }
        Ok(Self { points })
    }

    /// `intervals + 1` equally spaced points on `[0, horizon]`.
    pub fn uniform(intervals: usize, horizon: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidGrid("need at least one interval".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        let n = intervals as f64;
        let mut points: Vec<f64> = (0..=intervals)
            .map(|i| horizon * (i as f64) / n)
            .collect();
        points[intervals] = horizon;
        Ok(Self { points })
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of intervals, i.e. `len() - 1`.
    #[inline]
    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    /// Every `stride`-th point; the horizon must land on the stride.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.intervals() % stride != 0 {
            return Err(Error::InvalidGrid(format!(
                "stride {stride} does not divide {} intervals",
                self.intervals()
            )));
        }
        Self::new(self.points.iter().step_by(stride).copied().collect())
    }
}

/// Values of a path on a grid, pinned at `X(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} grid points",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(domain_origin(values[0]));
        }
        Ok(Self { grid, values })
    }

    /// The identically zero path on `grid`.
    pub fn zero(grid: Arc<TimeGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    #[inline]
    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The path `t ↦ X(c t)` in law: times scaled by `c`, values by `c^H`.
    pub fn dilate(&self, h: HurstParam, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(crate::error::domain(format!(
                "dilation factor must be positive, got {c}"
            )));
        }
        let grid = TimeGrid::new(self.grid.points().iter().map(|t| t * c).collect())?;
        let k = h.scale(c);
        Ok(Self {
            grid: Arc::new(grid),
            values: self.values.iter().map(|x| x * k).collect(),
        })
    }
}

fn domain_origin(v: f64) -> Error {
    Error::Domain(format!("path must start at the origin, got X(0) = {v}"))
}

/// Seed plus stream index. Identical specs give identical random sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

/// Bits of ChaCha word position reserved for each Monte Carlo sample.
const SAMPLE_WORD_BITS: u32 = 36;

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Generator for Monte Carlo sample `index`: same seed and stream, with the
    /// keystream offset by a disjoint block of `2^36` words per sample. The
    /// result depends only on `(seed, stream, index)`, never on scheduling.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        assert!(
            index < (1u64 << (68 - SAMPLE_WORD_BITS)),
            "sample index {index} exceeds the keystream partition"
        );
        let mut rng = self.rng();
        rng.set_word_pos(u128::from(index) << SAMPLE_WORD_BITS);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn hurst_bounds_are_strict() {
        assert!(HurstParam::new(0.0).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
        assert!(HurstParam::new(-0.2).is_err());
        assert_eq!(HurstParam::new(0.3).unwrap().value(), 0.3);
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.25]).is_err());
        let g = TimeGrid::uniform(8, 3.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.horizon(), 3.0);
        assert_eq!(g.points()[4], 1.5);
        let c = g.subsample(4).unwrap();
        assert_eq!(c.points(), &[0.0, 1.5, 3.0]);
        assert!(g.subsample(3).is_err());
    }

    #[test]
    fn path_is_pinned_at_origin() {
        let g = Arc::new(TimeGrid::uniform(2, 1.0).unwrap());
        assert!(SamplePath::new(g.clone(), vec![0.1, 0.0, 0.0]).is_err());
        assert!(SamplePath::new(g.clone(), vec![0.0, 0.0]).is_err());
        let p = SamplePath::new(g, vec![0.0, 1.0, -1.0]).unwrap();
        let h = HurstParam::new(0.5).unwrap();
        let d = p.dilate(h, 4.0).unwrap();
        assert_eq!(d.times(), &[0.0, 2.0, 4.0]);
        assert_eq!(d.values(), &[0.0, 2.0, -2.0]);
    }

    #[test]
    fn sample_streams_are_deterministic_and_distinct() {
        let spec = RngSpec::new(7, 3);
        let a: u64 = spec.sample_rng(5).random();
        let b: u64 = spec.sample_rng(5).random();
        assert_eq!(a, b);
        let mut other = spec.sample_rng(6);
        assert_ne!(b, other.random::<u64>());
        let mut other_stream = RngSpec::new(7, 4).sample_rng(5);
        assert_ne!(b, other_stream.random::<u64>());
    }
}
