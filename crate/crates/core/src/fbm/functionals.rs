use super::SamplePath;
use crate::error::{domain, Result};

/// Grid supremum and the earliest grid time attaining it.
pub fn sup_and_argmax(path: &SamplePath) -> (f64, f64) {
    let i = argmax_index(path.values());
    (path.values()[i], path.times()[i])
}

/// Index of the first maximal value.
pub(crate) fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Empirical Hölder modulus on `[0, 1]`:
/// `S = max_{i<j} |x_j - x_i| / (t_j - t_i)^gamma` over all grid pairs.
///
/// Every pair then satisfies `|x_j - x_i| / (t_j - t_i)^gamma <= S` exactly.
pub fn holder_modulus(path: &SamplePath, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(domain(format!("holder exponent must lie in (0, 1], got {gamma}")));
    }
    let horizon = path.grid().horizon();
    if horizon != 1.0 {
        return Err(domain(format!(
            "holder modulus is defined on [0, 1]; rescale the path first (horizon {horizon})"
        )));
    }
    let t = path.times();
    let x = path.values();
    Ok(match dyadic_step(t) {
        Some(step) => holder_uniform(x, step, gamma),
        None => holder_general(t, x, gamma),
    })
}

/// The step `t_1` if every `t_i == i * t_1` exactly and `t_1` is a power of
/// two, so that all pair differences are exact multiples of the step.
fn dyadic_step(t: &[f64]) -> Option<f64> {
    let step = t[1];
    let (mantissa, _) = frexp(step);
    if mantissa != 0.5 {
        return None;
    }
    t.iter()
        .enumerate()
        .all(|(i, &ti)| ti == i as f64 * step)
        .then_some(step)
}

fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let e = x.abs().log2().floor() as i32 + 1;
    (x / 2f64.powi(e), e)
}

fn holder_uniform(x: &[f64], step: f64, gamma: f64) -> f64 {
    let n = x.len();
    let mut s = 0.0f64;
    for d in 1..n {
        let m = max_abs_diff(&x[d..], &x[..n - d]);
        let q = m / (d as f64 * step).powf(gamma);
        if q > s {
            s = q;
        }
    }
    s
}

fn holder_general(t: &[f64], x: &[f64], gamma: f64) -> f64 {
    let mut s = 0.0f64;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let q = (x[j] - x[i]).abs() / (t[j] - t[i]).powf(gamma);
            if q > s {
                s = q;
            }
        }
    }
    s
}

/// `max_k |a_k - b_k|`, laid out for vectorization.
fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (u, v) in ca.zip(cb) {
        for k in 0..LANES {
            let d = (u[k] - v[k]).abs();
            acc[k] = if d > acc[k] { d } else { acc[k] };
        }
    }
    let mut m = acc.iter().copied().fold(0.0, f64::max);
    for (u, v) in ra.iter().zip(rb) {
        m = m.max((u - v).abs());
    }
    m
}
