//! Explicit barrier and scaling functions, and deterministic verification of
//! the analytic inequalities built from them.

mod lemma;
mod report;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{domain, parameter, Result};
use crate::fbm::{pow_nonneg, HurstParam};

pub use lemma::{
    check_comparison, check_f_growth, check_y_x1_nonneg, comparison_margins, find_s0, h1,
    h1_prime, h2, h2_prime, indrad_ineq, lemma_analytic_fact, step1_ineq, step2_branch_a_display,
    step2_derivative_ineqs, step3_ineq, step4_superadditivity, FGrowthReport, S0Search,
    Step2Branch, Step2Report,
};
pub use report::{IneqReport, Tally, INEQ_TOLERANCE};
pub use sweep::{log_grid, verify_appendix, AppendixConfig, AppendixResult};

/// Barrier parameters: `kappa > 1`, horizon `T`, Hurst index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    kappa: f64,
    horizon: f64,
    h: HurstParam,
}

impl DriftSpec {
    pub fn new(kappa: f64, horizon: f64, h: HurstParam) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 1.0) {
            return Err(parameter(format!("kappa must satisfy kappa > 1, got {kappa}")));
        }
        if !(horizon.is_finite() && horizon > 1.0) {
            return Err(parameter(format!(
                "drift horizon must exceed 1 (log T > 0), got {horizon}"
            )));
        }
        Ok(Self { kappa, horizon, h })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn hurst(&self) -> HurstParam {
        self.h
    }

    /// `(kappa log T)^{1/H}`, where the barrier drops.
    pub fn switch_time(&self) -> f64 {
        pow_nonneg(self.kappa * self.horizon.ln(), 1.0 / self.h.value())
    }

    /// The lower barrier level `-kappa log T`.
    pub fn low_level(&self) -> f64 {
        -self.kappa * self.horizon.ln()
    }
}

/// Piecewise barrier: 1 before the switch time, `-kappa log T` from it on.
pub fn phi(t: f64, spec: &DriftSpec) -> Result<f64> {
    if !(t >= 0.0 && t <= spec.horizon) {
        return Err(domain(format!("phi is defined on [0, {}], got {t}", spec.horizon)));
    }
    Ok(phi_unchecked(t, spec))
}

#[inline]
pub(crate) fn phi_unchecked(t: f64, spec: &DriftSpec) -> f64 {
    if t < spec.switch_time() {
        1.0
    } else {
        spec.low_level()
    }
}

/// Closed-form `∫_0^T e^{phi}` against the bound `2 e (kappa log T)^{1/H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiIntegralBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// False when `(kappa log T)^{1/H} > T`; the numbers are then not meaningful.
    pub precondition: bool,
}

pub fn phi_integral_bound(spec: &DriftSpec) -> PhiIntegralBound {
    let switch = spec.switch_time();
    let t = spec.horizon;
    let e = std::f64::consts::E;
    let lhs = e * switch + (t - switch) * t.powf(-spec.kappa);
    let rhs = 2.0 * e * switch;
    let precondition = switch <= t;
    PhiIntegralBound {
        lhs,
        rhs,
        holds: precondition && lhs <= rhs,
        precondition,
    }
}

/// Logarithmic drift barrier `1 - kappa log_+ t`.
pub fn tilde_phi(t: f64, kappa: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("tilde_phi needs t >= 0, got {t}")));
    }
    Ok(if t <= 1.0 { 1.0 } else { 1.0 - kappa * t.ln() })
}

/// Exponent of the slowly growing factor `l(t) = 2 (log log (t e^e))^lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogScale {
    lambda: f64,
}

impl Default for LogLogScale {
    fn default() -> Self {
        Self { lambda: 0.25 }
    }
}

impl LogLogScale {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(parameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `l(t) = 2 (log log (t e^e))^lambda` for `t >= 1`; `l(1) = 2`.
pub fn ell(t: f64, scale: &LogLogScale) -> Result<f64> {
    check_at_least_one(t, "ell")?;
    Ok(ell_unchecked(t, scale.lambda))
}

#[inline]
pub(crate) fn ell_unchecked(t: f64, lambda: f64) -> f64 {
    2.0 * pow_nonneg((t.ln() + std::f64::consts::E).ln(), lambda)
}

/// `l'(t) = 2 lambda (log log (t e^e))^{lambda - 1} / (t log (t e^e))`.
pub fn ell_prime(t: f64, scale: &LogLogScale) -> Result<f64> {
    check_at_least_one(t, "ell_prime")?;
    Ok(ell_prime_unchecked(t, scale.lambda))
}

#[inline]
pub(crate) fn ell_prime_unchecked(t: f64, lambda: f64) -> f64 {
    let log_te = t.ln() + std::f64::consts::E;
    2.0 * lambda * pow_nonneg(log_te.ln(), lambda - 1.0) / (t * log_te)
}

fn check_at_least_one(t: f64, what: &str) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{what} is defined for t >= 1, got {t}")))
    }
}

/// `E X(t) X(1)` for `t >= 1`.
#[inline]
fn cov_with_one(t: f64, two_h: f64) -> f64 {
    0.5 * (pow_nonneg(t, two_h) + 1.0 - pow_nonneg(t - 1.0, two_h))
}

/// The radicand `f(t)^{2H} = l(t)^2 t^{2H} - l(t)(t^{2H} + 1 - (t-1)^{2H}) + 1`.
pub(crate) fn f_radicand(t: f64, two_h: f64, lambda: f64) -> f64 {
    let l = ell_unchecked(t, lambda);
    let ta = pow_nonneg(t, two_h);
    l * l * ta - l * (ta + 1.0 - pow_nonneg(t - 1.0, two_h)) + 1.0
}

/// `f(t)`, defined by `E Y(t)^2 = f(t)^{2H}` with `Y(t) = l(t) X(t) - X(1)`.
pub fn f_of_t(t: f64, h: HurstParam, scale: &LogLogScale) -> Result<f64> {
    check_at_least_one(t, "f")?;
    let rho = f_radicand(t, h.twice(), scale.lambda);
    if !(rho > 0.0) {
        return Err(domain(format!("f radicand {rho} is not positive at t = {t}")));
    }
    Ok(pow_nonneg(rho, 1.0 / h.twice()))
}

/// `E Y(t) Y(s) = l(t) l(s) r(t,s) - l(t) r(t,1) - l(s) r(s,1) + 1`.
pub fn cov_y(t: f64, s: f64, h: HurstParam, scale: &LogLogScale) -> Result<f64> {
    check_at_least_one(t, "cov_y")?;
    check_at_least_one(s, "cov_y")?;
    let two_h = h.twice();
    // fixed argument order keeps the floating-point result symmetric
    let (t, s) = if t >= s { (t, s) } else { (s, t) };
    let (lt, ls) = (ell_unchecked(t, scale.lambda), ell_unchecked(s, scale.lambda));
    let r = crate::fbm::covariance::covariance_unchecked(two_h, t, s);
    Ok(lt * ls * r - lt * cov_with_one(t, two_h) - ls * cov_with_one(s, two_h) + 1.0)
}
