//! Survival-exponent fits and grid-refinement extrapolation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};

/// Condition number above which the log-correction design is flagged collinear.
pub const COLLINEARITY_THRESHOLD: f64 = 1e6;

/// Range of the free refinement exponent `p` in `v(n) = v_inf + b n^{-p}`.
pub const REFINE_EXPONENT_RANGE: (f64, f64) = (0.2, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    /// Abscissa: the horizon `T` for exit tables, `1/eps` for lower-tail tables.
    pub horizon: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub grid_points: usize,
}

/// Rows of `(T, F(T))` with strictly increasing `T` and estimates in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    rows: Vec<DecayRow>,
}

impl DecayTable {
    pub fn new(rows: Vec<DecayRow>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(parameter(format!(
                "a decay table needs at least 3 rows, got {}",
                rows.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.horizon.is_finite() && r.horizon > 0.0) {
                return Err(parameter(format!("row {i}: horizon must be positive")));
            }
            if !(r.estimate > 0.0 && r.estimate <= 1.0) {
                return Err(parameter(format!(
                    "row {i}: estimate {} outside (0, 1]",
                    r.estimate
                )));
            }
            if !(r.stderr >= 0.0 && r.stderr.is_finite()) {
                return Err(parameter(format!("row {i}: stderr must be finite and >= 0")));
            }
        }
        if rows.windows(2).any(|w| w[1].horizon <= w[0].horizon) {
            return Err(parameter("horizons must be strictly increasing"));
        }
        Ok(Self { rows })
    }

    /// Lower-tail table `P(X*_1 <= eps)` keyed by `1/eps`, so that a power-law
    /// fit reports the exponent of `eps`. `eps` must be strictly decreasing.
    pub fn from_lower_tail(rows: &[(f64, f64, f64, usize)]) -> Result<Self> {
        Self::new(
            rows.iter()
                .map(|&(eps, estimate, stderr, grid_points)| DecayRow {
                    horizon: 1.0 / eps,
                    estimate,
                    stderr,
                    grid_points,
                })
                .collect(),
        )
    }

    pub fn rows(&self) -> &[DecayRow] {
        &self.rows
    }

    /// Copy with every abscissa multiplied by `c`.
    pub fn rescaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.rows
                .iter()
                .map(|r| DecayRow {
                    horizon: r.horizon * c,
                    ..*r
                })
                .collect(),
        )
    }

    /// Relative-variance weights when every row carries a positive stderr,
    /// otherwise `None` (unweighted).
    fn weights(&self) -> Option<Vec<f64>> {
        self.rows
            .iter()
            .all(|r| r.stderr > 0.0)
            .then(|| {
                self.rows
                    .iter()
                    .map(|r| (r.estimate / r.stderr).powi(2))
                    .collect()
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: f64,
    pub theta_stderr: f64,
    /// Exponent `c` of the `(log T)^{-c}` factor, when fitted.
    pub log_correction: Option<f64>,
    pub log_correction_stderr: Option<f64>,
    pub intercept: f64,
    pub residual_norm: f64,
    /// Condition number of the (weighted) design matrix, when fitted jointly.
    pub condition_number: Option<f64>,
    pub collinear: bool,
}

/// Weighted least squares of `log F` on `log T`; `theta` is minus the slope.
///
/// With per-row stderrs the weights are `(F / stderr)^2` and the reported
/// stderr treats them as known variances; without, the fit is unweighted and
/// the stderr comes from the residuals.
pub fn fit_power_law(table: &DecayTable) -> Result<FitResult> {
    let x: Vec<f64> = table.rows.iter().map(|r| r.horizon.ln()).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.estimate.ln()).collect();
    let weights = table.weights();
    let w: Vec<f64> = weights.clone().unwrap_or_else(|| vec![1.0; x.len()]);

    let sw: f64 = w.iter().sum();
    let xbar = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Singular("all abscissae are equal".into()));
    }
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(w, (x, y))| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = w
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (x.len() - 2) as f64;
    let theta_stderr = match weights {
        Some(_) => (1.0 / sxx).sqrt(),
        None => (rss / dof / sxx).sqrt(),
    };
    Ok(FitResult {
        theta: -slope,
        theta_stderr,
        log_correction: None,
        log_correction_stderr: None,
        intercept,
        residual_norm: rss.sqrt(),
        condition_number: None,
        collinear: false,
    })
}

/// Joint fit of `log F = b - theta log T - c log log T`.
pub fn fit_with_log_correction(table: &DecayTable) -> Result<FitResult> {
    let rows = &table.rows;
    if rows.len() < 4 {
        return Err(parameter(format!(
            "log-corrected fit needs at least 4 rows, got {}",
            rows.len()
        )));
    }
    let e2 = std::f64::consts::E.powi(2);
    if let Some(r) = rows.iter().find(|r| r.horizon < e2) {
        return Err(parameter(format!(
            "log-corrected fit needs T >= e^2 throughout, got T = {}",
            r.horizon
        )));
    }
    let weights = table.weights();
    let k = rows.len();
    let root_w: Vec<f64> = match &weights {
        Some(w) => w.iter().map(|w| w.sqrt()).collect(),
        None => vec![1.0; k],
    };
    let design = DMatrix::from_fn(k, 3, |i, j| {
        let t = rows[i].horizon;
        root_w[i]
            * match j {
                0 => 1.0,
                1 => t.ln(),
                _ => t.ln().ln(),
            }
    });
    let rhs = DVector::from_fn(k, |i, _| root_w[i] * rows[i].estimate.ln());

    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) {
        return Err(Error::Singular("log-corrected design is rank deficient".into()));
    }
    let condition_number = smax / smin;
    let coef = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let resid = &rhs - &design * &coef;
    let rss = resid.norm_squared();

    let gram = design.transpose() * &design;
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Singular("normal matrix not invertible".into()))?;
    let scale = match weights {
        Some(_) => 1.0,
        None => rss / (k - 3).max(1) as f64,
    };
    Ok(FitResult {
        theta: -coef[1],
        theta_stderr: (inv[(1, 1)] * scale).sqrt(),
        log_correction: Some(-coef[2]),
        log_correction_stderr: Some((inv[(2, 2)] * scale).sqrt()),
        intercept: coef[0],
        residual_norm: rss.sqrt(),
        condition_number: Some(condition_number),
        collinear: condition_number > COLLINEARITY_THRESHOLD,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineLevel {
    pub grid_points: usize,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Extrapolated `v_inf`, or the finest value when the bias is unresolved.
    pub value: f64,
    pub finest: f64,
    pub exponent: f64,
    pub amplitude: f64,
    /// Linear weights with `value = sum_k weights[k] * levels[k].value`.
    pub weights: Vec<f64>,
    pub bias_unresolved: bool,
}

impl Extrapolation {
    /// The fitted correction `b n_f^{-p}` at the finest level.
    pub fn correction(&self, finest_points: usize) -> f64 {
        self.amplitude * (finest_points as f64).powf(-self.exponent)
    }
}

/// How the refinement exponent `p` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RefineExponent {
    /// Fitted by least squares within [`REFINE_EXPONENT_RANGE`].
    Free,
    /// Known in advance. Grid suprema of an `H`-self-similar path miss the
    /// true supremum by order `n^{-H}`, so `Fixed(H)` is the natural choice
    /// when the per-level values are too noisy to pin `p` down.
    Fixed(f64),
}

/// Fits `v(n) = v_inf + b n^{-p}` across doubling grid levels, `p` free in
/// [`REFINE_EXPONENT_RANGE`], and returns `v_inf`.
///
/// Values are expected to decrease in `n` (grid suprema increase with
/// refinement). A level that increases by more than twice the larger stderr
/// makes the result fall back to the finest value with `bias_unresolved` set.
pub fn refine_extrapolate(levels: &[RefineLevel]) -> Result<Extrapolation> {
    refine_extrapolate_with(levels, RefineExponent::Free)
}

pub fn refine_extrapolate_with(levels: &[RefineLevel], exponent: RefineExponent) -> Result<Extrapolation> {
    if let RefineExponent::Fixed(p) = exponent {
        if !(p.is_finite() && p > 0.0) {
            return Err(parameter(format!("refinement exponent must be positive, got {p}")));
        }
    }
    if levels.len() < 3 {
        return Err(parameter(format!(
            "refinement needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels
        .windows(2)
        .any(|w| w[1].grid_points != 2 * w[0].grid_points)
    {
        return Err(parameter("refinement levels must double the grid size"));
    }
    let k = levels.len();
    let finest = levels[k - 1].value;
    let only_finest = {
        let mut w = vec![0.0; k];
        w[k - 1] = 1.0;
        w
    };
    let fallback = |unresolved: bool| Extrapolation {
        value: finest,
        finest,
        exponent: f64::NAN,
        amplitude: 0.0,
        weights: only_finest.clone(),
        bias_unresolved: unresolved,
    };

    let monotone = levels.windows(2).all(|w| {
        let slack = 2.0 * w[0].stderr.max(w[1].stderr);
        w[1].value <= w[0].value + slack
    });
    if !monotone {
        return Ok(fallback(true));
    }
    if levels.iter().all(|l| l.value == finest) {
        return Ok(fallback(false));
    }

    let p = match exponent {
        RefineExponent::Fixed(p) => p,
        RefineExponent::Free => best_exponent(levels),
    };
    let (weights, amplitude, _) = fixed_exponent_fit(levels, p);
    let value = weights.iter().zip(levels).map(|(w, l)| w * l.value).sum();
    Ok(Extrapolation {
        value,
        finest,
        exponent: p,
        amplitude,
        weights,
        bias_unresolved: false,
    })
}

fn best_exponent(levels: &[RefineLevel]) -> f64 {
    let (lo, hi) = REFINE_EXPONENT_RANGE;
    let rss = |p: f64| fixed_exponent_fit(levels, p).2;
    // coarse scan, then golden section around the best bracket
    let steps = 1300;
    let h = (hi - lo) / steps as f64;
    let mut best = lo;
    let mut best_rss = f64::INFINITY;
    for i in 0..=steps {
        let p = lo + h * i as f64;
        let r = rss(p);
        if r < best_rss {
            best_rss = r;
            best = p;
        }
    }
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if rss(c) < rss(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let p = 0.5 * (a + b);
    if rss(p) <= best_rss {
        p
    } else {
        best
    }
}

/// Least squares of `v` on `[1, n^{-p}]`: intercept weights, slope, RSS.
fn fixed_exponent_fit(levels: &[RefineLevel], p: f64) -> (Vec<f64>, f64, f64) {
    let z: Vec<f64> = levels
        .iter()
        .map(|l| (l.grid_points as f64).powf(-p))
        .collect();
    let k = z.len() as f64;
    let zbar = z.iter().sum::<f64>() / k;
    let szz: f64 = z.iter().map(|z| (z - zbar).powi(2)).sum();
    // intercept = vbar - slope * zbar, slope = sum (z - zbar) v / szz
    let weights: Vec<f64> = z
        .iter()
        .map(|zi| 1.0 / k - zbar * (zi - zbar) / szz)
        .collect();
    let vbar = levels.iter().map(|l| l.value).sum::<f64>() / k;
    let slope = z
        .iter()
        .zip(levels)
        .map(|(zi, l)| (zi - zbar) * (l.value - vbar))
        .sum::<f64>()
        / szz;
    let intercept = vbar - slope * zbar;
    let rss = z
        .iter()
        .zip(levels)
        .map(|(zi, l)| (l.value - intercept - slope * zi).powi(2))
        .sum();
    (weights, slope, rss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(ts: &[f64], f: impl Fn(f64) -> f64) -> DecayTable {
        DecayTable::new(
            ts.iter()
                .map(|&t| DecayRow {
                    horizon: t,
                    estimate: f(t),
                    stderr: 0.0,
                    grid_points: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn table_validation() {
        let row = |t: f64, e: f64| DecayRow {
            horizon: t,
            estimate: e,
            stderr: 0.01,
            grid_points: 16,
        };
        assert!(DecayTable::new(vec![row(1.0, 0.5), row(2.0, 0.4)]).is_err());
        assert!(DecayTable::new(vec![row(1.0, 0.5), row(1.0, 0.4), row(3.0, 0.3)]).is_err());
        assert!(DecayTable::new(vec![row(1.0, 0.5), row(2.0, 0.0), row(3.0, 0.3)]).is_err());
        assert!(DecayTable::new(vec![row(1.0, 1.2), row(2.0, 0.4), row(3.0, 0.3)]).is_err());
        assert!(DecayTable::new(vec![row(1.0, 1.0), row(2.0, 0.4), row(3.0, 0.3)]).is_ok());
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_power_law(&table(&[2.0, 4.0, 8.0, 16.0], |t| t.powf(-0.5))).unwrap();
        assert_relative_eq!(fit.theta, 0.5, epsilon = 1e-12);
        assert!(fit.residual_norm < 1e-12);

        let fit = fit_power_law(&table(&[2.0, 4.0, 8.0, 16.0], |t| 0.3 * t.powf(-0.3))).unwrap();
        assert_relative_eq!(fit.theta, 0.3, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 0.3f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_corrected_exact_models() {
        let ts: Vec<f64> = (3..=10).map(|k| 2f64.powi(k)).collect();
        let fit = fit_with_log_correction(&table(&ts, |t| 0.5 * t.powf(-0.5) / t.ln())).unwrap();
        assert_relative_eq!(fit.theta, 0.5, epsilon = 1e-8);
        assert_relative_eq!(fit.log_correction.unwrap(), 1.0, epsilon = 1e-8);

        let fit = fit_with_log_correction(&table(&ts, |t| t.powf(-0.4))).unwrap();
        assert_relative_eq!(fit.theta, 0.4, epsilon = 1e-8);
        assert!(fit.log_correction.unwrap().abs() < 1e-8);
    }

    #[test]
    fn log_corrected_guards() {
        let short = table(&[8.0, 16.0, 32.0], |t| t.powf(-0.5));
        assert!(fit_with_log_correction(&short).is_err());
        let low = table(&[4.0, 8.0, 16.0, 32.0], |t| t.powf(-0.5));
        assert!(fit_with_log_correction(&low).is_err());
    }

    #[test]
    fn refine_exact_model() {
        let levels: Vec<RefineLevel> = (10..=12)
            .map(|k| {
                let n = 1usize << k;
                RefineLevel {
                    grid_points: n,
                    value: 0.5 + (n as f64).powf(-0.5),
                    stderr: 0.0,
                }
            })
            .collect();
        let ex = refine_extrapolate(&levels).unwrap();
        assert!((ex.value - 0.5).abs() < 1e-3, "{ex:?}");
        assert!((ex.exponent - 0.5).abs() < 1e-3);
        assert!(!ex.bias_unresolved);
        let sum: f64 = ex.weights.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn refine_constant_and_guards() {
        let lv = |n: usize, v: f64| RefineLevel {
            grid_points: n,
            value: v,
            stderr: 0.001,
        };
        let ex = refine_extrapolate(&[lv(8, 0.3), lv(16, 0.3), lv(32, 0.3)]).unwrap();
        assert_eq!(ex.value, 0.3);
        assert!(!ex.bias_unresolved);

        assert!(refine_extrapolate(&[lv(8, 0.3), lv(16, 0.3)]).is_err());
        assert!(refine_extrapolate(&[lv(8, 0.3), lv(24, 0.3), lv(48, 0.3)]).is_err());

        let ex = refine_extrapolate(&[lv(8, 0.30), lv(16, 0.31), lv(32, 0.29)]).unwrap();
        assert!(ex.bias_unresolved);
        assert_eq!(ex.value, 0.29);
    }

    #[test]
    fn fixed_exponent_recovers_exact_model() {
        // v(n) = 0.2 + 0.7 n^{-0.3}: the right exponent is exact, a wrong one is not
        let lv = |n: usize| RefineLevel {
            grid_points: n,
            value: 0.2 + 0.7 * (n as f64).powf(-0.3),
            stderr: 0.0,
        };
        let levels = [lv(4096), lv(8192), lv(16384)];
        let ex = refine_extrapolate_with(&levels, RefineExponent::Fixed(0.3)).unwrap();
        assert_relative_eq!(ex.value, 0.2, max_relative = 1e-10);
        assert_relative_eq!(ex.amplitude, 0.7, max_relative = 1e-9);
        assert_relative_eq!(ex.weights.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        let off = refine_extrapolate_with(&levels, RefineExponent::Fixed(0.5)).unwrap();
        assert!((off.value - 0.2).abs() > 1e-3);
        assert!(refine_extrapolate_with(&levels, RefineExponent::Fixed(0.0)).is_err());
    }
}
