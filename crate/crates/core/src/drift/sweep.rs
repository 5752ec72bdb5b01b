//! Deterministic grid sweeps over every appendix inequality.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lemma::{
    check_f_growth, comparison_margins, find_s0, find_s0_by, indrad_margin, lemma_margin,
    step1_margin, step2_derivative_ineqs, step3_margin, step4_margin, Step2Branch, S0Search,
};
use super::report::{IneqReport, Tally, Verdict, INEQ_TOLERANCE};
use super::{check_y_x1_nonneg, cov_y, ell_unchecked, f_of_t, LogLogScale};
use crate::error::{parameter, Result};
use crate::fbm::{pow_nonneg, HurstParam};

/// `lo * 10^{k / per_decade}` for `k = 0..=K`, ending exactly at `hi`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if !(lo > 0.0 && hi >= lo) || per_decade == 0 {
        return Vec::new();
    }
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    if steps == 0 {
        return vec![lo];
    }
    let mut g: Vec<f64> = (0..steps)
        .map(|k| lo * 10f64.powf(k as f64 / per_decade as f64))
        .collect();
    g.push(hi);
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixConfig {
    /// Exponents for the lemma and Steps 2 and 3; the comparison runs at
    /// `H = alpha / 2` for every `alpha < 1`.
    pub alphas: Vec<f64>,
    /// Exponents for the elementary Steps 1 and 4 and the indrad ratio.
    pub step_alphas: Vec<f64>,
    pub lambda: f64,
    /// Resolution of the `(s, t)` grid.
    pub per_decade: usize,
    pub t_max: f64,
    /// Resolution of the `(y, z)` grids.
    pub small_per_decade: usize,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            alphas: (2..=10).map(|k| k as f64 / 10.0).collect(),
            step_alphas: (1..=10).map(|k| k as f64 / 10.0).collect(),
            lambda: 0.25,
            per_decade: 200,
            t_max: 1e8,
            small_per_decade: 40,
        }
    }
}

/// Outcome of a full appendix sweep.
///
/// `reports` are assertions. `s0` records where each pair inequality was
/// found to hold from; a missing `s0` is a finding, not a violation, and the
/// corresponding sweep is then absent from `reports`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixResult {
    pub reports: Vec<IneqReport>,
    pub s0: Vec<S0Search>,
}

impl AppendixResult {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed)
    }
}

pub fn verify_appendix(cfg: &AppendixConfig) -> Result<AppendixResult> {
    for &a in cfg.alphas.iter().chain(&cfg.step_alphas) {
        if !(a > 0.0 && a <= 1.0) {
            return Err(parameter(format!("alpha must lie in (0, 1], got {a}")));
        }
    }
    let scale = LogLogScale::new(cfg.lambda)?;
    if !(cfg.t_max > 10.0) || cfg.per_decade == 0 || cfg.small_per_decade == 0 {
        return Err(parameter("appendix grid must reach beyond t = 10 with positive resolution"));
    }
    let grid = log_grid(1.0, cfg.t_max, cfg.per_decade);
    let mut reports = Vec::new();
    let mut s0 = Vec::new();

    reports.push(yz_sweep(cfg, "step1_ineq", step1_margin));
    reports.push(step1_monotone(cfg));
    reports.push(yz_sweep(cfg, "indrad_ineq", indrad_margin));
    reports.push(step4_sweep(cfg));

    for &alpha in &cfg.alphas {
        let lemma = find_s0(alpha, &scale, &grid)?;
        // the lemma's display tolerates absolute error of order 1e-9 f(t), which can
        // hide a failure the covariance form resolves; assert both above a joint s0
        let joint = if alpha < 1.0 {
            let h = HurstParam::new(alpha / 2.0)?;
            let joint = find_s0_by("lemma_and_comparison", alpha, cfg.lambda, &grid, |s, t| {
                let l = lemma_margin(alpha, s, t, cfg.lambda).ok()?;
                let (cm, cs, im, is) = comparison_margins(t, s, h, &scale).ok()?;
                Some(
                    l.0 >= -INEQ_TOLERANCE * l.1
                        && cm >= -INEQ_TOLERANCE * cs
                        && im >= -INEQ_TOLERANCE * is,
                )
            });
            if let Some(i) = joint.s0_index {
                reports.push(comparison_sweep(h, &scale, &grid[i..]));
            }
            reports.push(coincidence_sweep(alpha, h, &scale, &grid));
            reports.extend(single_variable_sweeps(h, &scale, cfg)?);
            Some(joint)
        } else {
            None
        };
        let from = match &joint {
            Some(j) => j.s0_index,
            None => lemma.s0_index,
        };
        if let Some(i) = from {
            reports.push(pair_sweep(
                &format!("lemma_analytic_fact alpha={alpha}"),
                &grid[i..],
                |s, t| lemma_margin(alpha, s, t, cfg.lambda).ok(),
            ));
        }
        s0.push(lemma);
        s0.extend(joint);

        let step3 = find_s0_by("step3_ineq", alpha, cfg.lambda, &grid, |s, t| {
            step3_margin(t, s, alpha, cfg.lambda)
                .ok()
                .map(|(m, sc)| m >= -INEQ_TOLERANCE * sc)
        });
        if let Some(i) = step3.s0_index {
            reports.push(pair_sweep(
                &format!("step3_ineq alpha={alpha}"),
                &grid[i..],
                |s, t| step3_margin(t, s, alpha, cfg.lambda).ok(),
            ));
        }
        s0.push(step3);

        let step2 = find_s0_by("step2_derivative_ineqs", alpha, cfg.lambda, &grid, |s, t| {
            step2_derivative_ineqs(t, s, alpha, &scale)
                .ok()
                .map(|r| r.report.passed && r.branch != Step2Branch::Neither)
        });
        if let Some(i) = step2.s0_index {
            reports.push(step2_sweep(alpha, &scale, &grid[i..]));
        }
        s0.push(step2);
    }
    Ok(AppendixResult { reports, s0 })
}

fn grid_label(g: &[f64]) -> String {
    match (g.first(), g.last()) {
        (Some(a), Some(b)) => format!("pairs s <= t on log grid [{a:.6e}, {b:.6e}], {} points", g.len()),
        _ => "empty grid".to_string(),
    }
}

/// Sweeps `margin(s, t)` over all pairs `s <= t` of `g`, parallel over `s`,
/// merged in grid order.
fn pair_sweep<F>(name: &str, g: &[f64], margin: F) -> IneqReport
where
    F: Fn(f64, f64) -> Option<(f64, f64)> + Sync,
{
    let label = grid_label(g);
    let parts: Vec<Tally> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let s = g[i];
            let mut t = Tally::new(name, "");
            for &tv in &g[i..] {
                match margin(s, tv) {
                    Some((m, sc)) => t.record(m, sc, &[("s", s), ("t", tv)]),
                    None => t.skip(),
                }
            }
            t
        })
        .collect();
    merge(name, label, parts)
}

fn merge(name: &str, label: String, parts: Vec<Tally>) -> IneqReport {
    let mut total = Tally::new(name, label);
    for p in parts {
        total.merge(p);
    }
    total.finish()
}

fn comparison_sweep(h: HurstParam, scale: &LogLogScale, g: &[f64]) -> IneqReport {
    let name = format!("check_comparison H={}", h.value());
    let label = grid_label(g);
    let parts: Vec<Tally> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let s = g[i];
            let mut t = Tally::new(&name, "");
            for &tv in &g[i..] {
                match comparison_margins(tv, s, h, scale) {
                    Ok((cm, cs, im, is)) => {
                        t.record(cm, cs, &[("s", s), ("t", tv), ("form", 0.0)]);
                        t.record(im, is, &[("s", s), ("t", tv), ("form", 1.0)]);
                    }
                    Err(_) => t.skip(),
                }
            }
            t
        })
        .collect();
    merge(&name, label, parts)
}

/// Pointwise agreement of the lemma verdict at `alpha = 2H` with both
/// comparison forms over the whole grid. A decisive disagreement (one form
/// passes, another fails, both outside the tolerance band) counts as a failure.
fn coincidence_sweep(alpha: f64, h: HurstParam, scale: &LogLogScale, g: &[f64]) -> IneqReport {
    let name = format!("lemma_comparison_coincidence H={}", h.value());
    let label = grid_label(g);
    let lambda = scale.lambda();
    let parts: Vec<(Tally, usize)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let s = g[i];
            let mut t = Tally::new(&name, "");
            let mut ties = 0usize;
            for &tv in &g[i..] {
                let lemma = lemma_margin(alpha, s, tv, lambda);
                let cmp = comparison_margins(tv, s, h, scale);
                match (lemma, cmp) {
                    (Ok((lm, ls)), Ok((cm, cs, im, is))) => {
                        let v = [Verdict::of(lm, ls), Verdict::of(cm, cs), Verdict::of(im, is)];
                        let conflict = v[0].conflicts(v[1]) || v[0].conflicts(v[2]) || v[1].conflicts(v[2]);
                        if v.contains(&Verdict::Tie) {
                            ties += 1;
                        }
                        let w = [("s", s), ("t", tv), ("lemma_rel", lm / ls.max(f64::MIN_POSITIVE))];
                        t.record(if conflict { -1.0 } else { 0.0 }, 1.0, &w);
                    }
                    _ => t.skip(),
                }
            }
            (t, ties)
        })
        .collect();
    let ties: usize = parts.iter().map(|p| p.1).sum();
    merge(&name, label, parts.into_iter().map(|p| p.0).collect())
        .with_note(format!("{ties} points within the tolerance band in at least one form"))
}

fn step2_sweep(alpha: f64, scale: &LogLogScale, g: &[f64]) -> IneqReport {
    let name = format!("step2_derivative_ineqs alpha={alpha}");
    let label = grid_label(g);
    let parts: Vec<Tally> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let s = g[i];
            let mut t = Tally::new(&name, "");
            for &tv in &g[i..] {
                match step2_derivative_ineqs(tv, s, alpha, scale) {
                    Ok(r) if r.branch != Step2Branch::Neither => t.absorb(&r.report),
                    _ => t.skip(),
                }
            }
            t
        })
        .collect();
    merge(&name, label, parts)
}

/// Sweeps over `y` on a log grid in `[1, 10]` and `z` on `[y, 1000]`.
fn yz_sweep<F>(cfg: &AppendixConfig, name: &str, margin: F) -> IneqReport
where
    F: Fn(f64, f64, f64) -> Result<(f64, f64)> + Sync,
{
    let ys = log_grid(1.0, 10.0, cfg.small_per_decade);
    let zs = log_grid(1.0, 1e3, cfg.small_per_decade);
    let label = format!(
        "y log grid [1, 10], z log grid [y, 1e3], {}/decade, alpha in {:?}",
        cfg.small_per_decade, cfg.step_alphas
    );
    let parts: Vec<Tally> = cfg
        .step_alphas
        .par_iter()
        .map(|&alpha| {
            let mut t = Tally::new(name, "");
            for &y in &ys {
                for &z in zs.iter().filter(|&&z| z >= y) {
                    match margin(y, z, alpha) {
                        Ok((m, sc)) => t.record(m, sc, &[("y", y), ("z", z), ("alpha", alpha)]),
                        Err(_) => t.skip(),
                    }
                }
            }
            t
        })
        .collect();
    merge(name, label, parts)
}

/// The Step-1 margin is nondecreasing in `y` at fixed `(z, alpha)`.
fn step1_monotone(cfg: &AppendixConfig) -> IneqReport {
    let name = "step1_monotone_in_y";
    let ys = log_grid(1.0, 10.0, cfg.small_per_decade);
    let zs = log_grid(1.0, 1e3, cfg.small_per_decade);
    let label = format!("consecutive y on the step-1 grid, {}/decade", cfg.small_per_decade);
    let parts: Vec<Tally> = cfg
        .step_alphas
        .par_iter()
        .map(|&alpha| {
            let mut t = Tally::new(name, "");
            for &z in &zs {
                let mut prev: Option<(f64, f64)> = None;
                for &y in ys.iter().filter(|&&y| y <= z) {
                    let Ok((m, sc)) = step1_margin(y, z, alpha) else {
                        t.skip();
                        continue;
                    };
                    if let Some((pm, psc)) = prev {
                        t.record(m - pm, sc.max(psc), &[("y", y), ("z", z), ("alpha", alpha)]);
                    }
                    prev = Some((m, sc));
                }
            }
            t
        })
        .collect();
    merge(name, label, parts)
}

fn step4_sweep(cfg: &AppendixConfig) -> IneqReport {
    let name = "step4_superadditivity";
    let vals: Vec<f64> = (0..=20).map(|k| 5.0 * k as f64).collect();
    let label = format!("x >= y, x, y, z on {{0, 5, ..., 100}}, alpha in {:?}", cfg.step_alphas);
    let parts: Vec<Tally> = cfg
        .step_alphas
        .par_iter()
        .map(|&alpha| {
            let mut t = Tally::new(name, "");
            for &x in &vals {
                for &y in vals.iter().filter(|&&y| y <= x) {
                    for &z in &vals {
                        match step4_margin(x, y, z, alpha) {
                            Ok((m, sc)) => {
                                t.record(m, sc, &[("x", x), ("y", y), ("z", z), ("alpha", alpha)])
                            }
                            Err(_) => t.skip(),
                        }
                    }
                }
            }
            t
        })
        .collect();
    merge(name, label, parts)
}

/// Sweeps in `t` alone at a fixed `H < 1/2`.
fn single_variable_sweeps(
    h: HurstParam,
    scale: &LogLogScale,
    cfg: &AppendixConfig,
) -> Result<Vec<IneqReport>> {
    let hv = h.value();
    let grid = log_grid(1.0, cfg.t_max, cfg.per_decade);
    let label = grid_label(&grid).replace("pairs s <= t on ", "");
    let lambda = scale.lambda();

    let mut ident = Tally::new(format!("cov_y_variance_identity H={hv}"), label.clone());
    let mut incr = Tally::new(format!("f_increasing H={hv}"), label.clone());
    let mut ell_lb = Tally::new(format!("ell_at_least_two lambda={lambda}"), label.clone());
    let mut prev_f: Option<f64> = None;
    let mut prev_l: Option<f64> = None;
    for &t in &grid {
        let f = f_of_t(t, h, scale)?;
        let v = cov_y(t, t, h, scale)?;
        let fp = pow_nonneg(f, h.twice());
        // identity to 1e-10 relative, expressed against the 1e-9 tally tolerance
        let sc = v.abs().max(fp);
        ident.record(1e-10 * sc - (v - fp).abs(), 1e-10 * sc / INEQ_TOLERANCE, &[("t", t)]);
        if let Some(p) = prev_f {
            // strict increase
            let m = if f > p { f - p } else { -f.max(1.0) };
            incr.record(m, f.max(p), &[("t", t)]);
        }
        prev_f = Some(f);
        let l = ell_unchecked(t, lambda);
        ell_lb.record(l - 2.0, 2.0, &[("t", t)]);
        if let Some(p) = prev_l {
            ell_lb.record(l - p, l, &[("t", t)]);
        }
        prev_l = Some(l);
    }

    let mut yx = Tally::new(
        format!("check_y_x1_nonneg H={hv}"),
        format!("log grid [1, 1e6], {}/decade", cfg.per_decade),
    );
    for t in log_grid(1.0, 1e6, cfg.per_decade) {
        let r = check_y_x1_nonneg(t, h, scale)?;
        yx.absorb(&r);
    }

    let mut out = vec![ident.finish(), incr.finish(), ell_lb.finish(), yx.finish()];
    if lambda == 0.25 && cfg.t_max >= 1e3 {
        out.push(check_f_growth(h, scale, 10.0, cfg.t_max, cfg.per_decade)?.report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_shape() {
        let g = log_grid(1.0, 100.0, 2);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[4], 100.0);
        assert!((g[1] - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(log_grid(5.0, 5.0, 10), vec![5.0]);
        assert!(log_grid(10.0, 1.0, 10).is_empty());
    }

    #[test]
    fn small_appendix_sweep_passes() {
        let cfg = AppendixConfig {
            alphas: vec![0.4, 0.6, 1.0],
            step_alphas: vec![0.2, 0.7],
            per_decade: 10,
            t_max: 1e6,
            small_per_decade: 10,
            ..AppendixConfig::default()
        };
        let res = verify_appendix(&cfg).unwrap();
        for r in &res.reports {
            assert!(r.passed, "{r:?}");
        }
        assert!(res.s0.iter().any(|s| s.check == "lemma_analytic_fact" && s.s0.is_some()));
    }

    #[test]
    fn rejects_bad_alpha() {
        let cfg = AppendixConfig {
            alphas: vec![1.2],
            ..AppendixConfig::default()
        };
        assert!(verify_appendix(&cfg).is_err());
    }
}
