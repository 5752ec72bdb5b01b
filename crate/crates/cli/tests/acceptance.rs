//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are never
//! swallowed by output capture. Pass criterion ids (`C1` ... `C9`) as
//! arguments to run a subset.
//!
//! Every oracle below is computed here, independently of the library: closed
//! forms through `statrs`, finite differences, ordinary least squares, and a
//! byte comparison of files written by the real binary.

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fbm_exit_core::drift::{h1, h1_prime, h2, h2_prime, verify_appendix, AppendixConfig, LogLogScale};
use fbm_exit_core::exit::{
    check_crucial_chain_with, check_drift_lower_bound_with, estimate_molchan_multi, map_paths,
    slepian_factorization_check, unit_source, ChainReport, SupremumSample, Welford,
};
use fbm_exit_core::fbm::{fbm_covariance, CholeskySampler, CirculantSampler, PathSource};
use fbm_exit_core::fit::{fit_power_law, DecayRow, DecayTable, RefineExponent};
use fbm_exit_core::{HurstParam, RngSpec, TimeGrid};
use statrs::distribution::{ContinuousCDF, Normal};

const SAMPLES: usize = 100_000;
/// Finest grid of the exit-probability runs; levels 2^12, 2^13, 2^14.
const FINEST: usize = 1 << 14;
const LEVELS: usize = 3;

struct Verdict {
    passed: bool,
    detail: String,
}

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

fn phi(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Slope of the ordinary least-squares line through `(x, y)`.
fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn doubling_horizons() -> Vec<f64> {
    (2..=9).map(|k| 2f64.powi(k)).collect()
}

/// Shared H = 1/2 sample for the Brownian oracles.
fn brownian_sample() -> SupremumSample {
    SupremumSample::draw(h(0.5), FINEST, LEVELS, SAMPLES, RngSpec::new(1001, 0)).unwrap()
}

fn c1_brownian_exit(s: &SupremumSample) -> Verdict {
    let mut passed = true;
    let mut detail = String::new();
    for t in [1.0, 4.0, 16.0] {
        let r = s.refined_exit(t, 1.0).unwrap();
        let oracle = 2.0 * phi(1.0 / f64::sqrt(t)) - 1.0;
        let z = (r.estimate.value - oracle) / r.estimate.stderr;
        let ok = z.abs() <= 3.0 && !r.extrapolation.bias_unresolved;
        passed &= ok;
        let raw = s.exit_prob_finest(t, 1.0).value;
        write!(
            detail,
            "T={t}: {:.5}±{:.5} vs {oracle:.6} (z={z:+.2}, raw {raw:.5}, p={:.2}); ",
            r.estimate.value, r.estimate.stderr, r.extrapolation.exponent
        )
        .unwrap();
    }
    Verdict { passed, detail }
}

fn c2_laplace(s: &SupremumSample) -> Verdict {
    let r = s.refined_laplace(1.0).unwrap();
    let oracle = 2.0 * 0.5f64.exp() * (1.0 - phi(1.0));
    let z = (r.estimate.value - oracle) / r.estimate.stderr;
    Verdict {
        passed: z.abs() <= 3.0 && !r.extrapolation.bias_unresolved,
        detail: format!(
            "g(1) = {:.5}±{:.5} vs {oracle:.6} (z={z:+.2}, raw {:.5})",
            r.estimate.value,
            r.estimate.stderr,
            s.laplace(LEVELS - 1, 1.0).value
        ),
    }
}

fn c3_exponents(brownian: &SupremumSample) -> Verdict {
    let mut passed = true;
    let mut detail = String::new();
    for (hv, seed) in [(0.3, 1003), (0.5, 0), (0.7, 1007)] {
        let owned;
        let s = if hv == 0.5 {
            brownian
        } else {
            owned = SupremumSample::draw(h(hv), FINEST, LEVELS, SAMPLES, RngSpec::new(seed, 0)).unwrap();
            &owned
        };
        let fit = |refined: bool| {
            let rows: Vec<DecayRow> = doubling_horizons()
                .iter()
                .map(|&t| {
                    let e = if refined {
                        s.refined_exit_with(t, 1.0, RefineExponent::Fixed(hv)).unwrap().estimate
                    } else {
                        s.exit_prob_finest(t, 1.0)
                    };
                    DecayRow {
                        horizon: t,
                        estimate: e.value,
                        stderr: e.stderr,
                        grid_points: FINEST + 1,
                    }
                })
                .collect();
            fit_power_law(&DecayTable::new(rows).unwrap()).unwrap()
        };
        let (f, raw) = (fit(true), fit(false));
        let target = 1.0 - hv;
        let ok = (f.theta - target).abs() <= 0.10;
        passed &= ok;
        write!(
            detail,
            "H={hv}: theta={:.3}±{:.3} vs {target:.1} (finest-grid raw {:.3}); ",
            f.theta, f.theta_stderr, raw.theta
        )
        .unwrap();
    }
    Verdict { passed, detail }
}

fn c4_molchan() -> Verdict {
    let mut passed = true;
    let mut detail = String::new();
    let ts = doubling_horizons();
    for (hv, seed) in [(0.3, 2003), (0.7, 2007)] {
        let hh = h(hv);
        let source = unit_source(hh, 1 << 12).unwrap();
        let est = estimate_molchan_multi(source.as_ref(), hh, &ts, SAMPLES / 5, RngSpec::new(seed, 0)).unwrap();
        let flat: Vec<f64> = est
            .iter()
            .zip(&ts)
            .map(|(e, &t)| e.value * t.powf(1.0 - hv))
            .collect();
        let (lo, hi) = flat
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let logt: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
        let logf: Vec<f64> = flat.iter().map(|v| v.ln()).collect();
        let slope = ols_slope(&logt, &logf);
        let ok = hi / lo <= 5.0 && slope.abs() <= 0.15;
        passed &= ok;
        write!(
            detail,
            "H={hv}: I*T^(1-H) in [{lo:.3}, {hi:.3}] (ratio {:.2}), slope {slope:+.3}; ",
            hi / lo
        )
        .unwrap();
    }
    Verdict { passed, detail }
}

fn c5_per_sample_suites() -> Verdict {
    let mut passed = true;
    let mut detail = String::new();
    let horizons = [4.0, 64.0];
    for (hv, seed) in [(0.3, 3003), (0.6, 3006)] {
        let hh = h(hv);
        let source = unit_source(hh, 1 << 12).unwrap();
        let rng = RngSpec::new(seed, 0);
        let chain = check_crucial_chain_with(source.as_ref(), hh, &horizons, 0.75 * hv, 10_000, rng).unwrap();
        let drift = check_drift_lower_bound_with(source.as_ref(), hh, &horizons, 1.5, 10_000, rng).unwrap();
        for r in chain.iter().chain(&drift) {
            let ok = r.violations == 0 && r.passed();
            passed &= ok;
            write!(detail, "{}; ", describe(r)).unwrap();
        }
    }
    Verdict { passed, detail }
}

fn describe(r: &ChainReport) -> String {
    format!(
        "{} H={} T={}: {} violations / {} (single-node windows {})",
        r.kind, r.params["hurst"], r.params["horizon"], r.violations, r.n_samples, r.degenerate_windows
    )
}

fn c6_appendix() -> Verdict {
    let result = verify_appendix(&AppendixConfig::default()).unwrap();
    let failed: Vec<&str> = result
        .reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    let needed = ["step1_ineq", "indrad_ineq", "step4_superadditivity", "lemma_analytic_fact", "check_comparison", "coincidence"];
    let missing: Vec<&str> = needed
        .iter()
        .copied()
        .filter(|n| !result.reports.iter().any(|r| r.name.contains(n)))
        .collect();

    // Step 2 derivatives against a fourth-order central difference at 100
    // points of a Weyl sequence
    let mut worst = 0.0f64;
    let frac = |k: usize, g: f64| (k as f64 * g).fract();
    for k in 1..=100 {
        let alpha = 0.1 + 0.9 * frac(k, 0.618_033_988_749_895);
        let lam = 0.05 + 1.95 * frac(k, 0.754_877_666_246_693);
        let sc = LogLogScale::new(lam).unwrap();
        let s = 10f64.powf(0.5 + 5.5 * frac(k, 0.569_840_290_998_053));
        let t = s * 10f64.powf(0.01 + 1.99 * frac(k, 0.438_737_166_362_212));
        let d = 1e-4 * t;
        let fd = |f: &dyn Fn(f64) -> f64| (8.0 * (f(t + d) - f(t - d)) - (f(t + 2.0 * d) - f(t - 2.0 * d))) / (12.0 * d);
        let e1 = fd(&|x| h1(x, alpha, &sc));
        let e2 = fd(&|x| h2(x, s, alpha, &sc));
        worst = worst
            .max((h1_prime(t, alpha, &sc) - e1).abs() / e1.abs())
            .max((h2_prime(t, s, alpha, &sc) - e2).abs() / e2.abs());
    }
    let s0: Vec<String> = result
        .s0
        .iter()
        .filter(|s| s.check == "lemma_analytic_fact")
        .map(|s| format!("{}:{}", s.alpha, s.s0.map_or("none".into(), |v| format!("{v:.3}"))))
        .collect();
    Verdict {
        passed: failed.is_empty() && missing.is_empty() && worst <= 1e-6,
        detail: format!(
            "{} reports, failed {failed:?}, missing {missing:?}; lemma s0 by alpha [{}]; worst derivative rel. error {worst:.1e}",
            result.reports.len(),
            s0.join(" ")
        ),
    }
}

/// Empirical `E X(t_i) X(t_j)` and its standard error, per pair.
fn empirical_cov(src: &dyn PathSource, pairs: &[(usize, usize)], seed: u64) -> Vec<(f64, f64)> {
    let prods = map_paths(src, SAMPLES, RngSpec::new(seed, 0), |_, p| {
        let x = p.values();
        Ok(pairs.iter().map(|&(i, j)| x[i] * x[j]).collect::<Vec<f64>>())
    })
    .unwrap();
    (0..pairs.len())
        .map(|k| {
            let w: Welford = prods.iter().map(|v| v[k]).collect();
            (w.mean(), w.stderr())
        })
        .collect()
}

fn c7_sampler_exactness() -> Verdict {
    let pairs = [(1, 1), (1, 256), (16, 17), (32, 200), (64, 64), (64, 128), (100, 101), (128, 250), (200, 256), (256, 256)];
    let mut worst = 0.0f64;
    for (hv, seed) in [(0.3, 4003), (0.5, 4005), (0.7, 4007)] {
        let hh = h(hv);
        let circ = CirculantSampler::new(hh, 256, 1.0).unwrap();
        let chol = CholeskySampler::new(hh, TimeGrid::uniform(256, 1.0).unwrap()).unwrap();
        let a = empirical_cov(&circ, &pairs, seed);
        let b = empirical_cov(&chol, &pairs, seed + 100);
        let t = circ.grid().points();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let exact = fbm_covariance(hh, t[i], t[j]).unwrap();
            worst = worst
                .max((a[k].0 - exact).abs() / a[k].1)
                .max((b[k].0 - exact).abs() / b[k].1)
                .max((a[k].0 - b[k].0).abs() / a[k].1.hypot(b[k].1));
        }
    }
    Verdict {
        passed: worst <= 4.0,
        detail: format!("30 pairs x 3 comparisons, worst deviation {worst:.2} stderr"),
    }
}

fn c8_slepian() -> Verdict {
    let mut passed = true;
    let mut detail = String::new();
    for (hv, seed) in [(0.3, 5003), (0.7, 5007)] {
        let r = slepian_factorization_check(h(hv), 4.0, 1.0, (1.0, 1.0), 1 << 10, SAMPLES, RngSpec::new(seed, 0)).unwrap();
        passed &= r.passed();
        write!(
            detail,
            "H={hv}: gap {:+.4}±{:.4}{}",
            r.level.gap,
            r.level.gap_stderr,
            if r.level.power_warning { " (not resolved from 0)" } else { "" }
        )
        .unwrap();
        if let Some(inc) = &r.increment {
            write!(detail, ", increment gap {:+.4}±{:.4}, inclusion breaches {}", inc.gap, inc.gap_stderr, r.inclusion_violations).unwrap();
        }
        detail.push_str("; ");
    }
    Verdict { passed, detail }
}

/// Runs the real binary with several worker counts and compares bytes.
fn c9_reproducibility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_fbm-exit");
    let runs: [(&str, &[&str]); 3] = [
        ("exit", &["exit", "--hurst", "0.5", "--horizon", "1", "--horizon", "4", "--grid", "4096", "--samples", "10000", "--seed", "7"]),
        ("chain", &["chain", "--hurst", "0.6", "--horizon", "4", "--horizon", "64", "--grid", "1024", "--samples", "2000", "--seed", "7"]),
        ("exit-extrapolated", &["exit", "--hurst", "0.3", "--horizon", "16", "--grid", "256", "--grid", "512", "--grid", "1024", "--extrapolate", "--samples", "5000", "--seed", "9"]),
    ];
    let mut passed = true;
    let mut detail = String::new();
    for (name, args) in runs {
        let mut outputs = Vec::new();
        for (threads, rep) in [("1", 0), ("4", 0), ("4", 1), ("2", 0)] {
            let out = dir.path().join(format!("{name}-{threads}-{rep}.out"));
            let status = Command::new(bin)
                .args(args)
                .arg("--out")
                .arg(&out)
                .env("FBM_EXIT_THREADS", threads)
                .output()
                .unwrap();
            passed &= status.status.success();
            outputs.push(read(&out));
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        passed &= same;
        write!(detail, "{name}: {} ({} bytes); ", if same { "identical" } else { "DIFFERENT" }, outputs[0].len()).unwrap();
    }
    Verdict { passed, detail }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('C')).collect();
    let wanted = |id: &str| selected.is_empty() || selected.iter().any(|s| s == id);
    let needs_brownian = ["C1", "C2", "C3"].iter().any(|c| wanted(c));
    let brownian = needs_brownian.then(brownian_sample);

    let criteria: Vec<(&str, &str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("C1", "Brownian exit oracle", Box::new(|| c1_brownian_exit(brownian.as_ref().unwrap()))),
        ("C2", "Laplace oracle", Box::new(|| c2_laplace(brownian.as_ref().unwrap()))),
        ("C3", "exponent recovery", Box::new(|| c3_exponents(brownian.as_ref().unwrap()))),
        ("C4", "Molchan flatness", Box::new(c4_molchan)),
        ("C5", "per-sample suites", Box::new(c5_per_sample_suites)),
        ("C6", "appendix verification", Box::new(c6_appendix)),
        ("C7", "sampler exactness", Box::new(c7_sampler_exactness)),
        ("C8", "Slepian checks", Box::new(c8_slepian)),
        ("C9", "reproducibility", Box::new(c9_reproducibility)),
    ];
    let mut all = true;
    for (id, name, check) in &criteria {
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        all &= v.passed;
        println!(
            "{} {id} {name} [{:.0}s]: {}",
            if v.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail.trim_end_matches("; ")
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
