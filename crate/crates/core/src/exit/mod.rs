//! Monte Carlo estimators for exit probabilities and the Molchan and Laplace
//! functionals, plus per-sample checks of the deterministic inequalities
//! that bound them.
//!
//! Every estimator samples unit-horizon paths and rescales by self-similarity:
//! on `[0, T]` the process is `T^H X(t / T)`. One sample set therefore serves
//! all horizons, and comparisons across horizons are paired.
//!
//! Bias direction: the grid supremum under-estimates the true supremum, so
//! exit probabilities and the Laplace functional are biased upward.

mod chain;
mod slepian;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Result};
use crate::fbm::functionals::argmax_index;
use crate::fbm::{
    CholeskySampler, CirculantSampler, HurstParam, PathSource, RngSpec, SamplePath, TimeGrid,
};
use crate::fit::{refine_extrapolate_with, Extrapolation, RefineExponent, RefineLevel};

pub use chain::{
    barrier_stays_below, check_crucial_chain, check_crucial_chain_with, check_drift_lower_bound,
    check_drift_lower_bound_with, ChainReport, Witness,
};
pub use slepian::{slepian_factorization_check, slepian_with_source, SlepianReport, SlepianTest};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub stderr: f64,
    pub n_samples: usize,
    pub grid_points: usize,
    pub seed: u64,
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::default();
        for x in iter {
            w.push(x);
        }
        w
    }
}

fn estimate(xs: impl IntoIterator<Item = f64>, grid_points: usize, seed: u64) -> MCEstimate {
    let w: Welford = xs.into_iter().collect();
    MCEstimate {
        value: w.mean(),
        stderr: w.stderr(),
        n_samples: w.count(),
        grid_points,
        seed,
    }
}

/// Runs `f` on `m` independent paths in parallel; sample `i` always uses the
/// generator `rng.sample_rng(i)` and results come back in index order.
pub fn map_paths<S, T, F>(source: &S, m: usize, rng: RngSpec, f: F) -> Result<Vec<T>>
where
    S: PathSource + ?Sized,
    T: Send,
    F: Fn(usize, &SamplePath) -> Result<T> + Sync,
{
    if m == 0 {
        return Err(parameter("need at least one Monte Carlo sample"));
    }
    (0..m)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.sample_rng(i as u64);
            let path = source.sample(&mut r)?;
            f(i, &path)
        })
        .collect()
}

/// Exact sampler for `n` intervals on `[0, 1]`: circulant embedding when `n`
/// is a power of two, Cholesky otherwise.
pub fn unit_source(h: HurstParam, n: usize) -> Result<Box<dyn PathSource>> {
    if n.is_power_of_two() && n >= 2 {
        Ok(Box::new(CirculantSampler::new(h, n, 1.0)?))
    } else {
        Ok(Box::new(CholeskySampler::new(h, TimeGrid::uniform(n, 1.0)?)?))
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(parameter(format!("horizon must be positive, got {horizon}")))
    }
}

fn check_unit<S: PathSource + ?Sized>(source: &S) -> Result<()> {
    let h = source.grid().horizon();
    if h == 1.0 {
        Ok(())
    } else {
        Err(parameter(format!(
            "estimators rescale unit-horizon paths; source horizon is {h}"
        )))
    }
}

fn grid_sup(values: &[f64]) -> f64 {
    values[argmax_index(values)]
}

/// `P(sup_{[0,T]} X <= barrier)` from `m` unit paths on `n` intervals.
pub fn estimate_exit_prob(
    h: HurstParam,
    horizon: f64,
    barrier: f64,
    n: usize,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    check_horizon(horizon)?;
    let source = unit_source(h, n)?;
    estimate_exit_prob_with(source.as_ref(), h, horizon, barrier, m, rng)
}

pub fn estimate_exit_prob_with<S: PathSource + ?Sized>(
    source: &S,
    h: HurstParam,
    horizon: f64,
    barrier: f64,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    check_horizon(horizon)?;
    check_unit(source)?;
    let a = h.scale(horizon);
    let sups = map_paths(source, m, rng, |_, p| Ok(grid_sup(p.values())))?;
    Ok(estimate(
        sups.iter().map(|&s| indicator(a * s <= barrier)),
        source.grid().len(),
        rng.seed,
    ))
}

/// `P(sup_{[0,1]} X <= eps)`; the same computation as the exit probability
/// at horizon 1 with barrier `eps`.
pub fn estimate_lower_tail(
    h: HurstParam,
    eps: f64,
    n: usize,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    if !(eps > 0.0) {
        return Err(parameter(format!("eps must be positive, got {eps}")));
    }
    estimate_exit_prob(h, 1.0, eps, n, m, rng)
}

/// `E exp(-T^H sup_{[0,1]} X)`.
pub fn estimate_laplace_g(
    h: HurstParam,
    horizon: f64,
    n: usize,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    let source = unit_source(h, n)?;
    estimate_laplace_g_with(source.as_ref(), h, horizon, m, rng)
}

pub fn estimate_laplace_g_with<S: PathSource + ?Sized>(
    source: &S,
    h: HurstParam,
    horizon: f64,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    check_horizon(horizon)?;
    check_unit(source)?;
    let a = h.scale(horizon);
    let sups = map_paths(source, m, rng, |_, p| Ok(grid_sup(p.values())))?;
    Ok(estimate(
        sups.iter().map(|&s| (-a * s).exp()),
        source.grid().len(),
        rng.seed,
    ))
}

/// `log ∫ e^{a X(u)} du` by the trapezoid rule on the path's grid, combined
/// in log space so large `a X` cannot overflow.
pub fn log_trapezoid_exp(times: &[f64], values: &[f64], a: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let top = a * grid_sup(values);
    let mut acc = 0.0;
    for i in 0..n {
        let left = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
        let right = if i + 1 < n { times[i + 1] - times[i] } else { 0.0 };
        acc += 0.5 * (left + right) * (a * values[i] - top).exp();
    }
    top + acc.ln()
}

/// `I(T) = E[(T ∫_0^1 e^{T^H X(u)} du)^{-1}]`.
pub fn estimate_molchan_i(
    h: HurstParam,
    horizon: f64,
    n: usize,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    let source = unit_source(h, n)?;
    estimate_molchan_i_with(source.as_ref(), h, horizon, m, rng)
}

pub fn estimate_molchan_i_with<S: PathSource + ?Sized>(
    source: &S,
    h: HurstParam,
    horizon: f64,
    m: usize,
    rng: RngSpec,
) -> Result<MCEstimate> {
    Ok(estimate_molchan_multi(source, h, &[horizon], m, rng)?.remove(0))
}

/// Molchan estimates at several horizons on one shared sample set.
pub fn estimate_molchan_multi<S: PathSource + ?Sized>(
    source: &S,
    h: HurstParam,
    horizons: &[f64],
    m: usize,
    rng: RngSpec,
) -> Result<Vec<MCEstimate>> {
    for &t in horizons {
        check_horizon(t)?;
    }
    check_unit(source)?;
    let scales: Vec<(f64, f64)> = horizons.iter().map(|&t| (h.scale(t), t.ln())).collect();
    let per_sample = map_paths(source, m, rng, |_, p| {
        Ok(scales
            .iter()
            .map(|&(a, log_t)| (-(log_trapezoid_exp(p.times(), p.values(), a) + log_t)).exp())
            .collect::<Vec<f64>>())
    })?;
    Ok((0..horizons.len())
        .map(|k| estimate(per_sample.iter().map(|v| v[k]), source.grid().len(), rng.seed))
        .collect())
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Grid suprema of unit-horizon paths at nested refinement levels.
///
/// Level `k` keeps every `2^{L-1-k}`-th point of the finest grid, so all
/// levels see the same underlying paths and differences between levels are
/// paired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupremumSample {
    hurst: HurstParam,
    /// Intervals per level, coarsest first.
    intervals: Vec<usize>,
    /// `sups[level][sample]`.
    sups: Vec<Vec<f64>>,
    seed: u64,
}

/// An extrapolated estimate together with the per-level raw estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedEstimate {
    /// `v_inf` with a paired standard error from the extrapolation weights.
    pub estimate: MCEstimate,
    pub levels: Vec<MCEstimate>,
    pub extrapolation: Extrapolation,
}

impl SupremumSample {
    /// `m` circulant paths on `finest` intervals of `[0, 1]`, recorded at
    /// `levels` grids `finest / 2^{levels-1}, ..., finest`.
    pub fn draw(
        h: HurstParam,
        finest: usize,
        levels: usize,
        m: usize,
        rng: RngSpec,
    ) -> Result<Self> {
        let source = CirculantSampler::new(h, finest, 1.0)?;
        Self::from_source(&source, h, levels, m, rng)
    }

    pub fn from_source<S: PathSource + ?Sized>(
        source: &S,
        h: HurstParam,
        levels: usize,
        m: usize,
        rng: RngSpec,
    ) -> Result<Self> {
        check_unit(source)?;
        let finest = source.grid().intervals();
        if levels == 0 || levels > 31 || finest % (1usize << (levels - 1)) != 0 {
            return Err(parameter(format!(
                "{levels} dyadic levels do not divide {finest} intervals"
            )));
        }
        let strides: Vec<usize> = (0..levels).rev().map(|k| 1usize << k).collect();
        let per_sample = map_paths(source, m, rng, |_, p| {
            Ok(strides
                .iter()
                .map(|&s| {
                    p.values()
                        .iter()
                        .step_by(s)
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect::<Vec<f64>>())
        })?;
        let sups = (0..levels)
            .map(|k| per_sample.iter().map(|v| v[k]).collect())
            .collect();
        Ok(Self {
            hurst: h,
            intervals: strides.iter().map(|s| finest / s).collect(),
            sups,
            seed: rng.seed,
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn intervals(&self) -> &[usize] {
        &self.intervals
    }

    pub fn n_samples(&self) -> usize {
        self.sups[0].len()
    }

    /// Unit-horizon grid suprema at `level` (0 is coarsest).
    pub fn sups(&self, level: usize) -> &[f64] {
        &self.sups[level]
    }

    fn finest_level(&self) -> usize {
        self.intervals.len() - 1
    }

    fn level_estimate(&self, level: usize, f: impl Fn(f64) -> f64) -> MCEstimate {
        estimate(
            self.sups[level].iter().map(|&s| f(s)),
            self.intervals[level] + 1,
            self.seed,
        )
    }

    /// `P(sup_{[0,T]} X <= barrier)` at `level`.
    pub fn exit_prob(&self, level: usize, horizon: f64, barrier: f64) -> MCEstimate {
        let a = self.hurst.scale(horizon);
        self.level_estimate(level, |s| indicator(a * s <= barrier))
    }

    pub fn exit_prob_finest(&self, horizon: f64, barrier: f64) -> MCEstimate {
        self.exit_prob(self.finest_level(), horizon, barrier)
    }

    /// `P(sup_{[0,1]} X <= eps)` at `level`.
    pub fn lower_tail(&self, level: usize, eps: f64) -> MCEstimate {
        self.exit_prob(level, 1.0, eps)
    }

    /// `E exp(-T^H sup)` at `level`.
    pub fn laplace(&self, level: usize, horizon: f64) -> MCEstimate {
        let a = self.hurst.scale(horizon);
        self.level_estimate(level, |s| (-a * s).exp())
    }

    pub fn refined_exit(&self, horizon: f64, barrier: f64) -> Result<RefinedEstimate> {
        let a = self.hurst.scale(horizon);
        self.refined(|s| indicator(a * s <= barrier))
    }

    pub fn refined_laplace(&self, horizon: f64) -> Result<RefinedEstimate> {
        let a = self.hurst.scale(horizon);
        self.refined(|s| (-a * s).exp())
    }

    /// Exit probability extrapolated with the exponent fixed at `p`.
    pub fn refined_exit_with(&self, horizon: f64, barrier: f64, exponent: RefineExponent) -> Result<RefinedEstimate> {
        let a = self.hurst.scale(horizon);
        self.refined_with(|s| indicator(a * s <= barrier), exponent)
    }

    /// Extrapolates a per-sample functional of the supremum across levels.
    pub fn refined(&self, f: impl Fn(f64) -> f64) -> Result<RefinedEstimate> {
        self.refined_with(f, RefineExponent::Free)
    }

    pub fn refined_with(&self, f: impl Fn(f64) -> f64, exponent: RefineExponent) -> Result<RefinedEstimate> {
        let levels: Vec<MCEstimate> = (0..self.intervals.len())
            .map(|k| self.level_estimate(k, &f))
            .collect();
        let rows: Vec<RefineLevel> = levels
            .iter()
            .map(|e| RefineLevel {
                grid_points: e.grid_points - 1,
                value: e.value,
                stderr: e.stderr,
            })
            .collect();
        let ex = refine_extrapolate_with(&rows, exponent)?;
        // v_inf is linear in the level means, so its per-sample version is the
        // same combination of the per-sample level values
        let combined = (0..self.n_samples()).map(|i| {
            ex.weights
                .iter()
                .zip(&self.sups)
                .map(|(w, s)| w * f(s[i]))
                .sum::<f64>()
        });
        let w: Welford = combined.collect();
        let finest = levels[levels.len() - 1];
        Ok(RefinedEstimate {
            estimate: MCEstimate {
                value: ex.value,
                stderr: w.stderr(),
                n_samples: w.count(),
                grid_points: finest.grid_points,
                seed: self.seed,
            },
            levels,
            extrapolation: ex,
        })
    }
}
