use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fbm_exit_core::drift::AppendixConfig;
use fbm_exit_core::fbm::DEFAULT_CHOLESKY_CAP;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Sample,
    Exit,
    LowerTail,
    Molchan,
    Laplace,
    Chain,
    DriftBound,
    Slepian,
    VerifyAppendix,
    Fit,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Sample => "sample",
            Kind::Exit => "exit",
            Kind::LowerTail => "lower-tail",
            Kind::Molchan => "molchan",
            Kind::Laplace => "laplace",
            Kind::Chain => "chain",
            Kind::DriftBound => "drift-bound",
            Kind::Slepian => "slepian",
            Kind::VerifyAppendix => "verify-appendix",
            Kind::Fit => "fit",
        }
    }

    /// Kinds whose output is a verdict rather than a table of estimates.
    pub fn is_verification(self) -> bool {
        matches!(self, Kind::Chain | Kind::DriftBound | Kind::Slepian | Kind::VerifyAppendix)
    }

    fn default_format(self) -> Format {
        if self.is_verification() || self == Kind::Fit {
            Format::Json
        } else {
            Format::Csv
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A fully resolved and validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub hurst: f64,
    pub horizons: Vec<f64>,
    pub grids: Vec<usize>,
    pub samples: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub barrier: f64,
    /// Lower-tail levels `eps` of `P(sup_[0,1] X <= eps)`.
    pub eps: Vec<f64>,
    /// Split time of the Slepian events.
    pub split: f64,
    /// Exponents of the appendix sweep.
    pub alphas: Vec<f64>,
    /// Treat `grids` as refinement levels and report extrapolated values.
    pub extrapolate: bool,
    /// Fixed exponent `p` of the `n^{-p}` grid bias; `None` fits it.
    pub refine_exponent: Option<f64>,
    pub seed: u64,
    /// Table consumed by `fit`.
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub format: Format,
}

/// Partially specified experiment, as read from a config file or the
/// command line. Command-line values take precedence over file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct SpecOverrides {
    #[arg(skip)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Horizon T; repeat for several.
    #[arg(long = "horizon")]
    pub horizons: Vec<f64>,
    /// Number of grid intervals; repeat for several.
    #[arg(long = "grid")]
    pub grids: Vec<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Hölder exponent; defaults to 0.75 H.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub barrier: Option<f64>,
    /// Lower-tail level; repeat for several.
    #[arg(long = "eps")]
    pub eps: Vec<f64>,
    #[arg(long)]
    pub split: Option<f64>,
    /// Appendix exponent; repeat for several.
    #[arg(long = "alpha")]
    pub alphas: Vec<f64>,
    /// Report values extrapolated across the grids (at least 3, doubling).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub extrapolate: Option<bool>,
    /// Fix the grid-bias exponent of the extrapolation (e.g. H) instead of fitting it.
    #[arg(long)]
    pub refine_exponent: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl SpecOverrides {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// `self` over `base`, field by field.
    pub fn over(self, base: SpecOverrides) -> SpecOverrides {
        SpecOverrides {
            kind: self.kind.or(base.kind),
            hurst: self.hurst.or(base.hurst),
            horizons: or_default(self.horizons, base.horizons),
            grids: or_default(self.grids, base.grids),
            samples: self.samples.or(base.samples),
            kappa: self.kappa.or(base.kappa),
            gamma: self.gamma.or(base.gamma),
            lambda: self.lambda.or(base.lambda),
            barrier: self.barrier.or(base.barrier),
            eps: or_default(self.eps, base.eps),
            split: self.split.or(base.split),
            alphas: or_default(self.alphas, base.alphas),
            extrapolate: self.extrapolate.or(base.extrapolate),
            refine_exponent: self.refine_exponent.or(base.refine_exponent),
            seed: self.seed.or(base.seed),
            input: self.input.or(base.input),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
        }
    }

    /// Fills defaults and validates against the preconditions of `kind`.
    pub fn resolve(self) -> Result<ExperimentSpec, CliError> {
        let kind = self
            .kind
            .ok_or_else(|| CliError::Validation("experiment kind is missing".into()))?;
        let hurst = self.hurst.unwrap_or(0.5);
        let format = self.format.unwrap_or(kind.default_format());
        let spec = ExperimentSpec {
            kind,
            hurst,
            horizons: or_default(self.horizons, vec![1.0]),
            grids: or_default(self.grids, vec![4096]),
            samples: self.samples.unwrap_or(10_000),
            kappa: self.kappa.unwrap_or(1.5),
            gamma: self.gamma.unwrap_or(0.75 * hurst),
            lambda: self.lambda.unwrap_or(0.25),
            barrier: self.barrier.unwrap_or(1.0),
            eps: or_default(self.eps, vec![1.0]),
            split: self.split.unwrap_or(1.0),
            alphas: or_default(self.alphas, AppendixConfig::default().alphas),
            extrapolate: self.extrapolate.unwrap_or(false),
            refine_exponent: self.refine_exponent,
            seed: self.seed.unwrap_or(0),
            input: self.input,
            out: self
                .out
                .unwrap_or_else(|| PathBuf::from(format!("{kind}.{}", format.extension()))),
            format,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn or_default<T>(v: Vec<T>, d: Vec<T>) -> Vec<T> {
    if v.is_empty() {
        d
    } else {
        v
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let k = self.kind;
        if matches!(k, Kind::VerifyAppendix | Kind::Fit) {
            if k == Kind::Fit && self.input.is_none() {
                return Err(invalid("fit needs an input table (--input)"));
            }
            if k == Kind::VerifyAppendix {
                if !(self.lambda.is_finite() && self.lambda > 0.0) {
                    return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
                }
                if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
                    return Err(invalid(format!("alpha must lie in (0, 1], got {a}")));
                }
            }
            if self.format != Format::Json {
                return Err(invalid(format!("{k} writes JSON only")));
            }
            return Ok(());
        }

        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid(format!("hurst must lie strictly inside (0, 1), got {}", self.hurst)));
        }
        if let Some(t) = self.horizons.iter().find(|&&t| !(t.is_finite() && t > 0.0)) {
            return Err(invalid(format!("horizons must be positive and finite, got {t}")));
        }
        if let Some(n) = self.grids.iter().find(|&&n| n < 2) {
            return Err(invalid(format!("grids need at least 2 intervals, got {n}")));
        }
        let needs_circulant = k == Kind::Slepian || self.extrapolate;
        for &n in &self.grids {
            let pow2 = n.is_power_of_two();
            if needs_circulant && !pow2 {
                return Err(invalid(format!("{k} needs power-of-two grids, got {n}")));
            }
            if !pow2 && n + 1 > DEFAULT_CHOLESKY_CAP {
                return Err(invalid(format!(
                    "grid {n} is not a power of two and exceeds the Cholesky cap of {DEFAULT_CHOLESKY_CAP} points"
                )));
            }
        }
        if self.samples == 0 {
            return Err(invalid("samples must be at least 1"));
        }
        if k.is_verification() && self.format != Format::Json {
            return Err(invalid(format!("{k} writes JSON reports only")));
        }
        match k {
            Kind::Exit | Kind::Laplace if !(self.barrier.is_finite()) => {
                return Err(invalid(format!("barrier must be finite, got {}", self.barrier)));
            }
            Kind::LowerTail => {
                if let Some(e) = self.eps.iter().find(|&&e| !(e.is_finite() && e > 0.0)) {
                    return Err(invalid(format!("eps must be positive, got {e}")));
                }
            }
            Kind::Chain => {
                let h = self.hurst;
                if !(self.gamma > h / 2.0 && self.gamma < h) {
                    return Err(invalid(format!(
                        "gamma must satisfy H/2 < gamma < H, got gamma = {} for H = {h}",
                        self.gamma
                    )));
                }
            }
            Kind::DriftBound if !(self.kappa > 1.0 && self.kappa.is_finite()) => {
                return Err(invalid(format!("kappa must satisfy kappa > 1, got {}", self.kappa)));
            }
            Kind::Slepian => {
                if let Some(t) = self.horizons.iter().find(|&&t| !(self.split > 0.0 && self.split < t)) {
                    return Err(invalid(format!(
                        "split must lie strictly inside (0, T), got split = {} for T = {t}",
                        self.split
                    )));
                }
            }
            _ => {}
        }
        if let Some(p) = self.refine_exponent {
            if !self.extrapolate {
                return Err(invalid("a refinement exponent needs --extrapolate"));
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(invalid(format!("refinement exponent must be positive, got {p}")));
            }
        }
        if self.extrapolate {
            if !matches!(k, Kind::Exit | Kind::LowerTail | Kind::Laplace) {
                return Err(invalid(format!("{k} does not support extrapolation")));
            }
            let mut g = self.grids.clone();
            g.sort_unstable();
            if g.len() < 3 || g.windows(2).any(|w| w[1] != 2 * w[0]) {
                return Err(invalid(format!(
                    "extrapolation needs at least 3 doubling grids, got {:?}",
                    self.grids
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(kind: Kind) -> SpecOverrides {
        SpecOverrides {
            kind: Some(kind),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_resolve() {
        let s = base(Kind::Exit).resolve().unwrap();
        assert_eq!(s.grids, vec![4096]);
        assert_eq!(s.format, Format::Csv);
        assert_eq!(s.out, PathBuf::from("exit.csv"));
        assert_eq!(base(Kind::Chain).resolve().unwrap().format, Format::Json);
    }

    #[test]
    fn kappa_guard_names_the_constraint() {
        let mut o = base(Kind::DriftBound);
        o.kappa = Some(0.5);
        let err = o.resolve().unwrap_err().to_string();
        assert!(err.contains("kappa > 1"), "{err}");
    }

    #[test]
    fn command_line_wins_over_file() {
        let file = SpecOverrides {
            hurst: Some(0.3),
            horizons: vec![2.0],
            samples: Some(5),
            ..base(Kind::Exit)
        };
        let cli = SpecOverrides {
            hurst: Some(0.7),
            ..Default::default()
        };
        let s = cli.over(file).resolve().unwrap();
        assert_eq!((s.hurst, s.horizons.clone(), s.samples), (0.7, vec![2.0], 5));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases: Vec<SpecOverrides> = vec![
            SpecOverrides { hurst: Some(1.0), ..base(Kind::Exit) },
            SpecOverrides { horizons: vec![-1.0], ..base(Kind::Molchan) },
            SpecOverrides { samples: Some(0), ..base(Kind::Laplace) },
            SpecOverrides { gamma: Some(0.1), hurst: Some(0.6), ..base(Kind::Chain) },
            SpecOverrides { grids: vec![100], ..base(Kind::Slepian) },
            SpecOverrides { horizons: vec![0.5], ..base(Kind::Slepian) },
            SpecOverrides { grids: vec![5000], ..base(Kind::Exit) },
            SpecOverrides { extrapolate: Some(true), grids: vec![64, 128], ..base(Kind::Exit) },
            SpecOverrides { format: Some(Format::Csv), ..base(Kind::Chain) },
            SpecOverrides { refine_exponent: Some(0.5), ..base(Kind::Exit) },
            base(Kind::Fit),
            SpecOverrides { alphas: vec![1.5], ..base(Kind::VerifyAppendix) },
        ];
        for c in cases {
            assert!(matches!(c.clone().resolve(), Err(CliError::Validation(_))), "{c:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<SpecOverrides>(r#"{"hurts": 0.3}"#).is_err());
        let o: SpecOverrides =
            serde_json::from_str(r#"{"kind": "drift-bound", "horizons": [4, 64]}"#).unwrap();
        assert_eq!(o.kind, Some(Kind::DriftBound));
    }
}
