//! One-sided Monte Carlo tests of the Slepian factorizations
//! `P(A ∩ B) >= P(A) P(B)`.

use serde::{Deserialize, Serialize};

use super::{estimate, map_paths, MCEstimate, Welford};
use crate::error::{parameter, Result};
use crate::fbm::{CirculantSampler, HurstParam, PathSource, RngSpec};

/// Slack of the one-sided test, in standard errors.
const SLACK: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianTest {
    pub p_ab: MCEstimate,
    pub p_a: MCEstimate,
    pub p_b: MCEstimate,
    /// `P(AB) - P(A) P(B)`.
    pub gap: f64,
    /// Delta-method stderr of the gap on shared samples.
    pub gap_stderr: f64,
    /// `gap >= -3 gap_stderr`.
    pub passed: bool,
    /// The gap is not resolved from zero: `gap < 3 gap_stderr`.
    pub power_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlepianReport {
    pub hurst: f64,
    pub horizon: f64,
    pub split: f64,
    pub barriers: (f64, f64),
    /// `A = {sup_[0,split] X <= b1}`, `B = {sup_[split,T] X <= b2}`.
    pub level: SlepianTest,
    /// For `H >= 1/2`: `A = {sup_[split,T] (X - X(split)) <= 1}`, `B = {X(split) <= -2}`.
    pub increment: Option<SlepianTest>,
    /// Samples in the increment event `A ∩ B` whose path exceeds `-1` on
    /// `[split, T]`; the inclusion is deterministic, so this must be zero.
    pub inclusion_violations: usize,
}

impl SlepianReport {
    pub fn passed(&self) -> bool {
        self.level.passed
            && self.increment.as_ref().is_none_or(|t| t.passed)
            && self.inclusion_violations == 0
    }
}

fn test(events: &[(bool, bool)], grid_points: usize, seed: u64) -> SlepianTest {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let p_ab = estimate(events.iter().map(|&(a, b)| ind(a && b)), grid_points, seed);
    let p_a = estimate(events.iter().map(|&(a, _)| ind(a)), grid_points, seed);
    let p_b = estimate(events.iter().map(|&(_, b)| ind(b)), grid_points, seed);
    let gap = p_ab.value - p_a.value * p_b.value;
    // influence function of (p_ab, p_a, p_b) -> p_ab - p_a p_b
    let psi: Welford = events
        .iter()
        .map(|&(a, b)| ind(a && b) - p_b.value * ind(a) - p_a.value * ind(b))
        .collect();
    let se = psi.stderr();
    SlepianTest {
        p_ab,
        p_a,
        p_b,
        gap,
        gap_stderr: se,
        passed: gap >= -SLACK * se,
        power_warning: gap < SLACK * se,
    }
}

/// Slepian checks on `m` paths of `n` intervals on `[0, horizon]`.
pub fn slepian_factorization_check(
    h: HurstParam,
    horizon: f64,
    split: f64,
    barriers: (f64, f64),
    n: usize,
    m: usize,
    rng: RngSpec,
) -> Result<SlepianReport> {
    let source = CirculantSampler::new(h, n, horizon)?;
    slepian_with_source(&source, h, split, barriers, m, rng)
}

pub fn slepian_with_source<S: PathSource + ?Sized>(
    source: &S,
    h: HurstParam,
    split: f64,
    barriers: (f64, f64),
    m: usize,
    rng: RngSpec,
) -> Result<SlepianReport> {
    let grid = source.grid();
    let horizon = grid.horizon();
    if !(split > 0.0 && split < horizon) {
        return Err(parameter(format!("split must lie in (0, {horizon}), got {split}")));
    }
    let times = grid.points();
    // last node at or before the split; both events share it when it is exact
    let k = times.partition_point(|&t| t <= split) - 1;
    let right = if times[k] == split { k } else { k + 1 };
    let with_increment = h.value() >= 0.5;
    let (b1, b2) = barriers;

    let per_sample = map_paths(source, m, rng, |_, p| {
        let x = p.values();
        let sup_left = x[..=k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sup_right = x[right..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let level = (sup_left <= b1, sup_right <= b2);
        let anchor = x[right];
        let inc_sup = x[right..]
            .iter()
            .map(|v| v - anchor)
            .fold(f64::NEG_INFINITY, f64::max);
        let inc = (inc_sup <= 1.0, anchor <= -2.0);
        let breach = inc.0 && inc.1 && sup_right > -1.0;
        Ok((level, inc, breach))
    })?;

    let n_points = grid.len();
    let level_events: Vec<(bool, bool)> = per_sample.iter().map(|s| s.0).collect();
    let increment = with_increment.then(|| {
        let ev: Vec<(bool, bool)> = per_sample.iter().map(|s| s.1).collect();
        test(&ev, n_points, rng.seed)
    });
    Ok(SlepianReport {
        hurst: h.value(),
        horizon,
        split: times[right],
        barriers,
        level: test(&level_events, n_points, rng.seed),
        increment,
        inclusion_violations: per_sample.iter().filter(|s| s.2).count(),
    })
}
