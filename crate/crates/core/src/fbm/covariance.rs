use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use super::{pow_nonneg, HurstParam, TimeGrid};
use crate::error::{domain, Result};

/// `E X(t) X(s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn fbm_covariance(h: HurstParam, t: f64, s: f64) -> Result<f64> {
    if !(t.is_finite() && s.is_finite() && t >= 0.0 && s >= 0.0) {
        return Err(domain(format!(
            "covariance needs finite non-negative times, got ({t}, {s})"
        )));
    }
    Ok(covariance_unchecked(h.twice(), t, s))
}

#[inline]
pub(crate) fn covariance_unchecked(two_h: f64, t: f64, s: f64) -> f64 {
    0.5 * (pow_nonneg(t, two_h) + pow_nonneg(s, two_h) - pow_nonneg((t - s).abs(), two_h))
}

/// Autocovariance of fractional Gaussian noise with increments of length `step`.
pub fn fgn_autocovariance(h: HurstParam, lag: u64, step: f64) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(domain(format!("step must be positive, got {step}")));
    }
    Ok(pow_nonneg(step, h.twice()) * unit_fgn_autocovariance(h.twice(), lag))
}

#[inline]
pub(crate) fn unit_fgn_autocovariance(two_h: f64, lag: u64) -> f64 {
    let k = lag as f64;
    0.5 * (pow_nonneg(k + 1.0, two_h) + pow_nonneg((k - 1.0).abs(), two_h)
        - 2.0 * pow_nonneg(k, two_h))
}

/// Covariance of the path values at the non-zero grid points.
pub fn covariance_matrix(h: HurstParam, grid: &TimeGrid) -> DMatrix<f64> {
    let t = &grid.points()[1..];
    let two_h = h.twice();
    DMatrix::from_fn(t.len(), t.len(), |i, j| covariance_unchecked(two_h, t[i], t[j]))
}

/// `(E|N(0,1)|^a)^{1/a}`, the ratio `(E|X(t)-X(s)|^a)^{1/a} / |t-s|^H`.
pub fn gaussian_abs_moment(a: f64) -> Result<f64> {
    if !(a.is_finite() && a > 0.0) {
        return Err(domain(format!("moment order must be positive, got {a}")));
    }
    // E|N|^a = 2^{a/2} Γ((a+1)/2) / √π
    let log_moment = 0.5 * a * std::f64::consts::LN_2 + ln_gamma(0.5 * (a + 1.0))
        - 0.5 * std::f64::consts::PI.ln();
    Ok((log_moment / a).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn covariance_examples() {
        assert_relative_eq!(fbm_covariance(h(0.5), 1.0, 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            fbm_covariance(h(0.75), 2.0, 1.0).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-14
        );
        for hv in [0.1, 0.37, 0.9] {
            let tau = 2.7_f64;
            assert_relative_eq!(
                fbm_covariance(h(hv), tau, tau).unwrap(),
                tau.powf(2.0 * hv),
                max_relative = 1e-14
            );
        }
        assert!(fbm_covariance(h(0.5), -1.0, 1.0).is_err());
        assert!(fbm_covariance(h(0.5), f64::INFINITY, 1.0).is_err());
        assert_eq!(fbm_covariance(h(0.3), 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn fgn_examples() {
        assert!(fgn_autocovariance(h(0.5), 3, 1.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(
            fgn_autocovariance(h(0.3), 0, 0.25).unwrap(),
            0.25f64.powf(0.6),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fgn_autocovariance(h(0.75), 1, 1.0).unwrap(),
            2f64.sqrt() - 1.0,
            max_relative = 1e-14
        );
        assert!(fgn_autocovariance(h(0.5), 1, 0.0).is_err());
    }

    #[test]
    fn small_covariance_matrices() {
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        for hv in [0.2, 0.5, 0.8] {
            let m = covariance_matrix(h(hv), &g);
            assert_eq!(m.shape(), (1, 1));
            assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-15);
        }
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let m = covariance_matrix(h(0.5), &g);
        assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m[(1, 1)], 2.0, epsilon = 1e-15);
    }

    /// Eigenvalues of a 2×2 symmetric matrix from the characteristic polynomial.
    #[test]
    fn half_grid_matrix_is_psd() {
        let g = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let m = covariance_matrix(h(0.3), &g);
        let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        assert_relative_eq!(a, 0.5f64.powf(0.6), max_relative = 1e-14);
        assert_relative_eq!(b, 0.5 * (0.5f64.powf(0.6) + 1.0 - 0.5f64.powf(0.6)), max_relative = 1e-14);
        let tr = a + d;
        let disc = ((a - d).powi(2) + 4.0 * b * b).sqrt();
        let lo = 0.5 * (tr - disc);
        assert!(lo > 0.0, "smallest eigenvalue {lo}");
        // the same value from nalgebra's symmetric eigensolver
        let eig = m.symmetric_eigen().eigenvalues;
        assert_relative_eq!(eig.min(), lo, max_relative = 1e-12);
    }

    #[test]
    fn abs_moment_values() {
        assert_relative_eq!(gaussian_abs_moment(2.0).unwrap(), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gaussian_abs_moment(4.0).unwrap(), 3f64.powf(0.25), max_relative = 1e-13);
        assert_relative_eq!(
            gaussian_abs_moment(1.0).unwrap(),
            (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-13
        );
        assert!(gaussian_abs_moment(0.0).is_err());
        assert!(gaussian_abs_moment(-1.0).is_err());
    }
}
