//! Point evaluations of the comparison-lemma inequalities and their proof steps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{IneqReport, Tally, Verdict, INEQ_TOLERANCE};
use super::{cov_y, ell_prime_unchecked, ell_unchecked, f_of_t, LogLogScale};
use crate::error::{domain, parameter, Result};
use crate::fbm::covariance::covariance_unchecked;
use crate::fbm::{pow_nonneg, HurstParam};

/// Radicands within this relative distance below zero are rounding noise.
const RADICAND_SLACK: f64 = 1e-12;

fn root(radicand: f64, magnitude: f64, exponent: f64, what: &str) -> Result<f64> {
    if radicand >= 0.0 {
        Ok(pow_nonneg(radicand, exponent))
    } else if radicand >= -RADICAND_SLACK * magnitude {
        Ok(0.0)
    } else {
        Err(domain(format!("{what}: negative radicand {radicand:e}")))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(parameter(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

fn check_ordered(t: f64, s: f64) -> Result<()> {
    if s >= 1.0 && t >= s && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("need t >= s >= 1, got t = {t}, s = {s}")))
    }
}

fn single(name: &str, margin: f64, scale: f64, witness: &[(&'static str, f64)]) -> IneqReport {
    let mut tally = Tally::new(name, "single point");
    tally.record(margin, scale, witness);
    tally.finish()
}

/// `(margin, scale)` of the three-term lemma display at exponent `alpha`.
pub(crate) fn lemma_margin(alpha: f64, s: f64, t: f64, lambda: f64) -> Result<(f64, f64)> {
    let (lt, ls) = (ell_unchecked(t, lambda), ell_unchecked(s, lambda));
    let (ta, sa) = (pow_nonneg(t, alpha), pow_nonneg(s, alpha));
    let inv = 1.0 / alpha;
    let a = lt * lt * ta - lt * (ta + 1.0 - pow_nonneg(t - 1.0, alpha)) + 1.0;
    let a_mag = lt * lt * ta + lt * (ta + 1.0) + 1.0;
    let b = lt * lt * ta - lt * ls * (ta + sa - pow_nonneg(t - s, alpha)) + ls * ls * sa;
    let b_mag = lt * lt * ta + lt * ls * (ta + sa) + ls * ls * sa;
    let c = ls * ls * sa - ls * (sa + 1.0 - pow_nonneg(s - 1.0, alpha)) + 1.0;
    let c_mag = ls * ls * sa + ls * (sa + 1.0) + 1.0;
    let ra = root(a, a_mag, inv, "lemma first term")?;
    let rb = root(b, b_mag, inv, "lemma second term")?;
    let rc = root(c, c_mag, inv, "lemma third term")?;
    Ok((ra - rb - rc, ra.max(rb + rc)))
}

/// The lemma's inequality at one point `t >= s >= 1`.
pub fn lemma_analytic_fact(
    alpha: f64,
    s: f64,
    t: f64,
    scale: &LogLogScale,
) -> Result<IneqReport> {
    check_alpha(alpha)?;
    check_ordered(t, s)?;
    let (m, sc) = lemma_margin(alpha, s, t, scale.lambda())?;
    Ok(single(
        "lemma_analytic_fact",
        m,
        sc,
        &[("alpha", alpha), ("s", s), ("t", t)],
    ))
}

/// Margins of the covariance comparison in both algebraic forms.
///
/// Returns `(covariance margin, covariance scale, increment margin, increment
/// scale)` where the covariance form is `E Y(t)Y(s) - E X(f(t))X(f(s))` and the
/// increment form is `|f(t) - f(s)|^{2H} - E|Y(t) - Y(s)|^2`.
pub fn comparison_margins(
    t: f64,
    s: f64,
    h: HurstParam,
    scale: &LogLogScale,
) -> Result<(f64, f64, f64, f64)> {
    check_ordered(t, s)?;
    let two_h = h.twice();
    let lambda = scale.lambda();
    let (ft, fs) = (f_of_t(t, h, scale)?, f_of_t(s, h, scale)?);
    let cyy = cov_y(t, s, h, scale)?;
    let cxx = covariance_unchecked(two_h, ft, fs);
    let (lt, ls) = (ell_unchecked(t, lambda), ell_unchecked(s, lambda));
    let increment = lt * lt * pow_nonneg(t, two_h)
        - 2.0 * lt * ls * covariance_unchecked(two_h, t, s)
        + ls * ls * pow_nonneg(s, two_h);
    let fx = pow_nonneg((ft - fs).abs(), two_h);
    Ok((
        cyy - cxx,
        cyy.abs().max(cxx.abs()),
        fx - increment,
        fx.max(increment.abs()),
    ))
}

/// `E Y(t)Y(s) >= E X(f(t))X(f(s))` together with the equivalent increment
/// form; passes only when both hold.
pub fn check_comparison(
    t: f64,
    s: f64,
    h: HurstParam,
    scale: &LogLogScale,
) -> Result<IneqReport> {
    if h.value() >= 0.5 {
        return Err(parameter("the comparison is stated for H < 1/2"));
    }
    let (cm, cs, im, is) = comparison_margins(t, s, h, scale)?;
    let mut tally = Tally::new("check_comparison", "single point");
    let w = [("t", t), ("s", s), ("cov_margin", cm), ("inc_margin", im)];
    tally.record(cm, cs, &w);
    tally.record(im, is, &w);
    let report = tally.finish();
    Ok(if Verdict::of(cm, cs).conflicts(Verdict::of(im, is)) {
        report.with_note("covariance and increment forms disagree")
    } else {
        report
    })
}

/// `E Y(t)X(1) = l(t) r(t,1) - 1 >= l(t)/2 - 1 >= 0`, via `r(t,1) >= 1/2`.
pub fn check_y_x1_nonneg(t: f64, h: HurstParam, scale: &LogLogScale) -> Result<IneqReport> {
    if !(t >= 1.0) {
        return Err(domain(format!("need t >= 1, got {t}")));
    }
    let l = ell_unchecked(t, scale.lambda());
    let r = covariance_unchecked(h.twice(), t, 1.0);
    let eyx = l * r - 1.0;
    let mut tally = Tally::new("check_y_x1_nonneg", "single point");
    let w = [("t", t), ("r_t1", r), ("e_yx1", eyx)];
    tally.record(r - 0.5, r.max(0.5), &w);
    tally.record(eyx - (0.5 * l - 1.0), eyx.abs().max(0.5 * l), &w);
    tally.record(0.5 * l - 1.0, 1.0, &w);
    Ok(tally.finish())
}

/// `(y z^a - y + 1)^{1/a} - (y (z-1)^a - y + 1)^{1/a} >= 1` for `z >= y >= 1`.
pub fn step1_ineq(y: f64, z: f64, alpha: f64) -> Result<IneqReport> {
    check_alpha(alpha)?;
    let (m, sc) = step1_margin(y, z, alpha)?;
    Ok(single("step1_ineq", m, sc, &[("y", y), ("z", z), ("alpha", alpha)]))
}

pub(crate) fn step1_margin(y: f64, z: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(y >= 1.0 && z >= y) {
        return Err(domain(format!("need z >= y >= 1, got y = {y}, z = {z}")));
    }
    let inv = 1.0 / alpha;
    let za = pow_nonneg(z, alpha);
    let a = root(y * za - y + 1.0, y * za + y + 1.0, inv, "step1 first term")?;
    let zm = pow_nonneg(z - 1.0, alpha);
    let b = root(y * zm - y + 1.0, y * zm + y + 1.0, inv, "step1 second term")?;
    Ok((a - b - 1.0, a.max(b + 1.0)))
}

/// `(y(z^a-1)+1) / (y((z-1)^a-1)+1) >= z^a / (z-1)^a` for `z >= y >= 1`, `z > 1`.
pub fn indrad_ineq(y: f64, z: f64, alpha: f64) -> Result<IneqReport> {
    check_alpha(alpha)?;
    let (m, sc) = indrad_margin(y, z, alpha)?;
    Ok(single("indrad_ineq", m, sc, &[("y", y), ("z", z), ("alpha", alpha)]))
}

pub(crate) fn indrad_margin(y: f64, z: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(y >= 1.0 && z >= y && z > 1.0) {
        return Err(domain(format!("need z >= y >= 1 and z > 1, got y = {y}, z = {z}")));
    }
    let za = pow_nonneg(z, alpha);
    let zm = pow_nonneg(z - 1.0, alpha);
    let den = y * (zm - 1.0) + 1.0;
    if !(den > 0.0) {
        return Err(domain(format!("indrad denominator {den:e} is not positive")));
    }
    let lhs = (y * (za - 1.0) + 1.0) / den;
    let rhs = za / zm;
    Ok((lhs - rhs, lhs.abs().max(rhs.abs())))
}

/// `h_1(t) = l(t)^{1/a} (t^a - 1)^{1/a}`.
pub fn h1(t: f64, alpha: f64, scale: &LogLogScale) -> f64 {
    let inv = 1.0 / alpha;
    pow_nonneg(ell_unchecked(t, scale.lambda()), inv) * pow_nonneg(pow_nonneg(t, alpha) - 1.0, inv)
}

/// `h_2(t) = (l(t) t^a - l(t) s^a + l(s) s^a)^{1/a}` for fixed `s`.
pub fn h2(t: f64, s: f64, alpha: f64, scale: &LogLogScale) -> f64 {
    let lambda = scale.lambda();
    let (lt, ls) = (ell_unchecked(t, lambda), ell_unchecked(s, lambda));
    let sa = pow_nonneg(s, alpha);
    pow_nonneg(lt * pow_nonneg(t, alpha) - lt * sa + ls * sa, 1.0 / alpha)
}

/// Closed-form derivative of [`h1`].
pub fn h1_prime(t: f64, alpha: f64, scale: &LogLogScale) -> f64 {
    let lambda = scale.lambda();
    let (l, dl) = (ell_unchecked(t, lambda), ell_prime_unchecked(t, lambda));
    let inv = 1.0 / alpha;
    let base = pow_nonneg(t, alpha) - 1.0;
    inv * pow_nonneg(l, inv - 1.0) * dl * pow_nonneg(base, inv)
        + pow_nonneg(l, inv) * inv * pow_nonneg(base, inv - 1.0) * alpha * pow_nonneg(t, alpha - 1.0)
}

/// Closed-form derivative of [`h2`] in `t`.
pub fn h2_prime(t: f64, s: f64, alpha: f64, scale: &LogLogScale) -> f64 {
    let lambda = scale.lambda();
    let (l, dl, ls) = (
        ell_unchecked(t, lambda),
        ell_prime_unchecked(t, lambda),
        ell_unchecked(s, lambda),
    );
    let (ta, sa) = (pow_nonneg(t, alpha), pow_nonneg(s, alpha));
    let inv = 1.0 / alpha;
    let r = l * ta - l * sa + ls * sa;
    inv * pow_nonneg(r, inv - 1.0) * (dl * ta + l * alpha * pow_nonneg(t, alpha - 1.0) - dl * sa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step2Branch {
    /// `(log t)^2 <= (s^a - 2)/a`.
    A,
    /// `(log t)^2 > (s^a - 2)/a` with `s^a > 2`.
    B,
    /// `s^a <= 2`: neither side condition can hold.
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step2Report {
    pub h1_prime: f64,
    pub h2_prime: f64,
    pub branch: Step2Branch,
    /// `s^a (1 - l(s)/l(t))`, evaluated on branch B.
    pub q: Option<f64>,
    pub report: IneqReport,
}

/// Both sides of the branch-A display
/// `(t^{1-a} - (t^a-1)^{1/a-1}) a t^{a-1} t^{a-1} l/l' <= s^a - 2`.
///
/// Only `t > 1` is required; the display is a statement about `t` and `s`
/// separately.
pub fn step2_branch_a_display(
    t: f64,
    s: f64,
    alpha: f64,
    scale: &LogLogScale,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(t > 1.0 && s >= 1.0) {
        return Err(domain(format!("need t > 1 and s >= 1, got t = {t}, s = {s}")));
    }
    let lambda = scale.lambda();
    let inv = 1.0 / alpha;
    let ta = pow_nonneg(t, alpha);
    let ratio = ell_unchecked(t, lambda) / ell_prime_unchecked(t, lambda);
    let lhs = (pow_nonneg(ta, inv - 1.0) - pow_nonneg(ta - 1.0, inv - 1.0))
        * alpha
        * pow_nonneg(t, alpha - 1.0)
        * pow_nonneg(ta, 1.0 - inv)
        * ratio;
    Ok((lhs, pow_nonneg(s, alpha) - 2.0))
}

/// `h_1'(t) >= h_2'(t)` with the two sufficient sub-inequalities and the
/// applicable branch display of the second one.
pub fn step2_derivative_ineqs(
    t: f64,
    s: f64,
    alpha: f64,
    scale: &LogLogScale,
) -> Result<Step2Report> {
    check_alpha(alpha)?;
    check_ordered(t, s)?;
    if !(t > 1.0) {
        return Err(domain("step 2 needs t > 1 for l'(t) and (t^a - 1) > 0"));
    }
    let lambda = scale.lambda();
    let (l, dl, ls) = (
        ell_unchecked(t, lambda),
        ell_prime_unchecked(t, lambda),
        ell_unchecked(s, lambda),
    );
    let inv = 1.0 / alpha;
    let (ta, sa) = (pow_nonneg(t, alpha), pow_nonneg(s, alpha));
    let t_am1 = pow_nonneg(t, alpha - 1.0);
    let r = l * ta - l * sa + ls * sa;
    let r_pow = pow_nonneg(r, inv - 1.0);

    let d1 = h1_prime(t, alpha, scale);
    let d2 = h2_prime(t, s, alpha, scale);
    let w = [("t", t), ("s", s), ("alpha", alpha)];
    let mut tally = Tally::new("step2_derivative_ineqs", "single point");
    tally.record(d1 - d2, d1.abs().max(d2.abs()), &w);

    // case A: l^{1/a-1} l' (t^a-1)^{1/a} >= R^{1/a-1} (l' t^a - 2 l')
    let a_lhs = pow_nonneg(l, inv - 1.0) * dl * pow_nonneg(ta - 1.0, inv);
    let a_rhs = r_pow * (dl * ta - 2.0 * dl);
    tally.record(a_lhs - a_rhs, a_lhs.abs().max(a_rhs.abs()), &w);

    // case B: l^{1/a} (t^a-1)^{1/a-1} a t^{a-1} >= R^{1/a-1} (l a t^{a-1} - l' (s^a - 2))
    let b_lhs = pow_nonneg(l, inv) * pow_nonneg(ta - 1.0, inv - 1.0) * alpha * t_am1;
    let b_rhs = r_pow * (l * alpha * t_am1 - dl * (sa - 2.0));
    tally.record(b_lhs - b_rhs, b_lhs.abs().max(b_rhs.abs()), &w);

    let branch = if sa <= 2.0 {
        Step2Branch::Neither
    } else if t.ln().powi(2) <= (sa - 2.0) / alpha {
        Step2Branch::A
    } else {
        Step2Branch::B
    };
    let mut q_out = None;
    match branch {
        Step2Branch::A => {
            let (lhs, rhs) = step2_branch_a_display(t, s, alpha, scale)?;
            tally.record(rhs - lhs, lhs.abs().max(rhs.abs()), &w);
        }
        Step2Branch::B => {
            let q = sa * (1.0 - ls / l);
            q_out = Some(q);
            tally.record(q - 1.0, q.abs().max(1.0), &w);
            let base = ta - q;
            if base < 0.0 {
                tally.skip();
            } else {
                let lhs = pow_nonneg(ta - 1.0, inv - 1.0) * alpha * t_am1;
                let rhs = pow_nonneg(base, inv - 1.0) * (alpha * t_am1 - dl / l * (sa - 2.0));
                tally.record(lhs - rhs, lhs.abs().max(rhs.abs()), &w);
            }
        }
        Step2Branch::Neither => {}
    }
    let report = tally.finish();
    let report = if branch == Step2Branch::Neither {
        report.with_note("branch precondition: s^alpha <= 2, neither side condition holds")
    } else {
        report
    };
    Ok(Step2Report {
        h1_prime: d1,
        h2_prime: d2,
        branch,
        q: q_out,
        report,
    })
}

/// `l(t)^{1/a}(t^a-1)^{1/a} - l(s)^{1/a}(s^a-1)^{1/a} - (l(t)(t-s)^a - l(t)s^a + l(s)s^a)^{1/a} >= 0`.
///
/// A negative third radicand is a domain error, not a violation.
pub fn step3_ineq(t: f64, s: f64, alpha: f64, scale: &LogLogScale) -> Result<IneqReport> {
    check_alpha(alpha)?;
    check_ordered(t, s)?;
    let (m, sc) = step3_margin(t, s, alpha, scale.lambda())?;
    Ok(single("step3_ineq", m, sc, &[("t", t), ("s", s), ("alpha", alpha)]))
}

pub(crate) fn step3_margin(t: f64, s: f64, alpha: f64, lambda: f64) -> Result<(f64, f64)> {
    let (lt, ls) = (ell_unchecked(t, lambda), ell_unchecked(s, lambda));
    let inv = 1.0 / alpha;
    let (ta, sa) = (pow_nonneg(t, alpha), pow_nonneg(s, alpha));
    let first = pow_nonneg(lt, inv) * pow_nonneg(ta - 1.0, inv);
    let second = pow_nonneg(ls, inv) * root(sa - 1.0, sa + 1.0, inv, "step3 second term")?;
    let r = lt * pow_nonneg(t - s, alpha) - lt * sa + ls * sa;
    let r_mag = lt * pow_nonneg(t - s, alpha) + lt * sa + ls * sa;
    let third = root(r, r_mag, inv, "step3 third term")?;
    Ok((first - second - third, first.max(second + third)))
}

/// `(x+z)^{1/a} - (y+z)^{1/a} >= x^{1/a} - y^{1/a}` for `x >= y >= 0`, `z >= 0`.
pub fn step4_superadditivity(x: f64, y: f64, z: f64, alpha: f64) -> Result<IneqReport> {
    check_alpha(alpha)?;
    let (m, sc) = step4_margin(x, y, z, alpha)?;
    Ok(single(
        "step4_superadditivity",
        m,
        sc,
        &[("x", x), ("y", y), ("z", z), ("alpha", alpha)],
    ))
}

pub(crate) fn step4_margin(x: f64, y: f64, z: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(x >= y && y >= 0.0 && z >= 0.0) {
        return Err(domain(format!("need x >= y >= 0 and z >= 0, got ({x}, {y}, {z})")));
    }
    let inv = 1.0 / alpha;
    let p = |v: f64| pow_nonneg(v, inv);
    let lhs = p(x + z) - p(y + z);
    let rhs = p(x) - p(y);
    Ok((lhs - rhs, p(x + z).max(p(x))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FGrowthReport {
    pub report: IneqReport,
    /// Largest observed `f(t) / ((log log t)^{1/(4H)} t)`.
    pub k_empirical: f64,
    pub final_ratio: f64,
}

/// Bounded-ratio check of `f(t) <= k (log log t)^{1/(4H)} t` over a
/// log-spaced grid on `[t_lo, t_hi]`, `t_lo >= 10`.
///
/// Passes when the ratio at `t_hi` and the maximum over the top decade stay
/// within 5% of the running maximum below the top decade.
pub fn check_f_growth(
    h: HurstParam,
    scale: &LogLogScale,
    t_lo: f64,
    t_hi: f64,
    per_decade: usize,
) -> Result<FGrowthReport> {
    if h.value() >= 0.5 {
        return Err(parameter("f growth is stated for H < 1/2"));
    }
    if scale.lambda() != 0.25 {
        return Err(parameter("f growth is stated for lambda = 1/4"));
    }
    if !(t_lo >= 10.0 && t_hi >= 100.0 * t_lo) {
        return Err(parameter(format!(
            "need 10 <= t_lo and at least two decades, got [{t_lo}, {t_hi}]"
        )));
    }
    let grid = super::sweep::log_grid(t_lo, t_hi, per_decade);
    let top = t_hi / 10.0;
    let exponent = 1.0 / (4.0 * h.value());
    let mut below = 0.0f64;
    let mut top_max = 0.0f64;
    let mut k = 0.0f64;
    let mut final_ratio = 0.0;
    let mut witness_t = t_lo;
    for &t in &grid {
        let ratio = f_of_t(t, h, scale)? / (pow_nonneg(t.ln().ln(), exponent) * t);
        if ratio > k {
            k = ratio;
            witness_t = t;
        }
        if t < top {
            below = below.max(ratio);
        } else {
            top_max = top_max.max(ratio);
        }
        final_ratio = ratio;
    }
    let mut tally = Tally::new(
        "check_f_growth",
        format!("log grid [{t_lo:e}, {t_hi:e}], {per_decade}/decade"),
    );
    let w = [("hurst", h.value()), ("t_at_k", witness_t), ("k", k)];
    tally.record(1.05 * below - final_ratio, 1.05 * below, &w);
    tally.record(1.05 * below - top_max, 1.05 * below, &w);
    Ok(FGrowthReport {
        report: tally.finish(),
        k_empirical: k,
        final_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S0Search {
    pub check: String,
    pub alpha: f64,
    pub lambda: f64,
    /// Smallest grid `s` with every grid pair `s0 <= s <= t` passing.
    pub s0: Option<f64>,
    pub s0_index: Option<usize>,
    pub grid_len: usize,
    /// Number of grid `s` values with some failing `t >= s`.
    pub failing_s: usize,
}

/// Empirical `s0` for the lemma's inequality on `search_grid` (ascending).
pub fn find_s0(alpha: f64, scale: &LogLogScale, search_grid: &[f64]) -> Result<S0Search> {
    check_alpha(alpha)?;
    let lambda = scale.lambda();
    Ok(find_s0_by("lemma_analytic_fact", alpha, lambda, search_grid, |s, t| {
        lemma_margin(alpha, s, t, lambda)
            .map(|(m, sc)| m >= -INEQ_TOLERANCE * sc)
            .ok()
    }))
}

/// Generic `s0` search. `pass(s, t)` returns `None` for out-of-domain points,
/// which neither pass nor fail.
pub(crate) fn find_s0_by<F>(
    check: &str,
    alpha: f64,
    lambda: f64,
    grid: &[f64],
    pass: F,
) -> S0Search
where
    F: Fn(f64, f64) -> Option<bool> + Sync,
{
    let ok: Vec<bool> = (0..grid.len())
        .into_par_iter()
        .map(|i| grid[i..].iter().all(|&t| pass(grid[i], t).unwrap_or(true)))
        .collect();
    let failing_s = ok.iter().filter(|o| !**o).count();
    let first = match ok.iter().rposition(|o| !*o) {
        None if !grid.is_empty() => Some(0),
        None => None,
        Some(last_bad) if last_bad + 1 < grid.len() => Some(last_bad + 1),
        Some(_) => None,
    };
    S0Search {
        check: check.to_string(),
        alpha,
        lambda,
        s0: first.map(|i| grid[i]),
        s0_index: first,
        grid_len: grid.len(),
        failing_s,
    }
}
