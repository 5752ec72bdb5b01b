use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fbm_exit_core::drift::{verify_appendix, AppendixConfig};
use fbm_exit_core::exit::{
    check_crucial_chain_with, check_drift_lower_bound_with, estimate_molchan_multi, map_paths,
    slepian_factorization_check, unit_source, ChainReport, MCEstimate, SupremumSample,
};
use fbm_exit_core::fbm::{CholeskySampler, CirculantSampler, PathSource};
use fbm_exit_core::fit::{
    fit_power_law, fit_with_log_correction, DecayRow, DecayTable, FitResult, RefineExponent,
};
use fbm_exit_core::{HurstParam, RngSpec, TimeGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::output::{
    emit_csv, emit_json, manifest_path, read_csv, sha256_file, Cell, EstimateRow,
    ESTIMATE_COLUMNS, LOWER_TAIL_COLUMNS, PATH_COLUMNS,
};
use crate::spec::{ExperimentSpec, Format, Kind};
use crate::{CliError, THREADS_VAR};

/// The generator stream a task drew from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSeed {
    pub task: String,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// A verification failed; the run stopped after `cell`.
    Violation { cell: String, witness: Value },
    /// An error aborted the run in `cell`; no result file was written.
    Failed { cell: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: ExperimentSpec,
    pub version: String,
    /// Seconds since the Unix epoch at the start of the run.
    pub timestamp: u64,
    pub tasks: Vec<TaskSeed>,
    pub wall_seconds: f64,
    /// SHA-256 of every result file, keyed by path.
    pub results: BTreeMap<String, String>,
    pub status: RunStatus,
}

impl RunManifest {
    /// 0 when everything passed, 2 when a verification failed.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Completed => 0,
            RunStatus::Violation { .. } => 2,
            RunStatus::Failed { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub hurst: f64,
    /// `horizon` for exit tables, `eps` for lower-tail tables.
    pub key: String,
    /// Rows used: the finest grid available at each key.
    pub rows: Vec<DecayRow>,
    pub power_law: FitResult,
    pub log_corrected: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_corrected_skipped: Option<String>,
}

enum Payload {
    Table {
        columns: &'static [&'static str],
        rows: Vec<Vec<Cell>>,
    },
    Json(Value),
}

struct Outcome {
    payload: Payload,
    status: RunStatus,
}

/// Error inside a named cell of the experiment grid.
struct CellError {
    cell: String,
    error: CliError,
}

trait InCell<T> {
    fn in_cell(self, cell: &str) -> Result<T, CellError>;
}

impl<T, E: Into<CliError>> InCell<T> for Result<T, E> {
    fn in_cell(self, cell: &str) -> Result<T, CellError> {
        self.map_err(|e| CellError {
            cell: cell.to_owned(),
            error: e.into(),
        })
    }
}

/// Reads the worker cap from the environment; unset means rayon's default.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<RunManifest, CliError> {
    match threads {
        None => run(spec),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {n} worker threads: {e}")))?
            .install(|| run(spec)),
    }
}

/// Runs every cell of `spec`, writes the result file and its manifest.
///
/// Results depend only on `spec`: each cell draws from its own stream of the
/// master seed, and parallel work is merged in sample order.
pub fn run(spec: &ExperimentSpec) -> Result<RunManifest, CliError> {
    spec.validate()?;
    let started = Instant::now();
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut tasks = Vec::new();
    let outcome = dispatch(spec, &mut tasks);

    let mut manifest = RunManifest {
        spec: spec.clone(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        timestamp,
        tasks,
        wall_seconds: 0.0,
        results: BTreeMap::new(),
        status: RunStatus::Completed,
    };
    let result = match outcome {
        Ok(Outcome { payload, status }) => {
            write_payload(spec, payload)?;
            let out = &spec.out;
            manifest
                .results
                .insert(out.display().to_string(), sha256_file(out)?);
            manifest.status = status;
            Ok(())
        }
        Err(CellError { cell, error }) => {
            manifest.status = RunStatus::Failed {
                cell,
                message: error.to_string(),
            };
            Err(error)
        }
    };
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    emit_json(&manifest_path(&spec.out), &manifest)?;
    result.map(|()| manifest)
}

fn write_payload(spec: &ExperimentSpec, payload: Payload) -> Result<(), CliError> {
    match (payload, spec.format) {
        (Payload::Table { columns, rows }, Format::Csv) => emit_csv(&spec.out, columns, &rows),
        (Payload::Table { columns, rows }, Format::Json) => {
            let objects: Vec<serde_json::Map<String, Value>> = rows
                .iter()
                .map(|r| {
                    columns
                        .iter()
                        .zip(r)
                        .map(|(c, cell)| {
                            let v = match *cell {
                                Cell::Real(x) => Value::from(x),
                                Cell::Count(n) => Value::from(n),
                            };
                            ((*c).to_owned(), v)
                        })
                        .collect()
                })
                .collect();
            emit_json(&spec.out, &objects)
        }
        (Payload::Json(v), _) => emit_json(&spec.out, &v),
    }
}

fn dispatch(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    match spec.kind {
        Kind::Sample => sample_paths(spec, tasks),
        Kind::Exit | Kind::LowerTail | Kind::Laplace => supremum_estimates(spec, tasks),
        Kind::Molchan => molchan(spec, tasks),
        Kind::Chain | Kind::DriftBound => chain_suites(spec, tasks),
        Kind::Slepian => slepian(spec, tasks),
        Kind::VerifyAppendix => appendix(spec),
        Kind::Fit => fit(spec),
    }
}

fn hurst(spec: &ExperimentSpec) -> Result<HurstParam, CellError> {
    HurstParam::new(spec.hurst).in_cell("setup")
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize to JSON")
}

fn completed(payload: Payload) -> Outcome {
    Outcome {
        payload,
        status: RunStatus::Completed,
    }
}

fn estimate_row(spec: &ExperimentSpec, key: f64, e: &MCEstimate) -> Vec<Cell> {
    EstimateRow {
        hurst: spec.hurst,
        key,
        grid_points: e.grid_points,
        samples: e.n_samples,
        value: e.value,
        stderr: e.stderr,
        seed: e.seed,
    }
    .cells()
}

fn sample_paths(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    let h = hurst(spec)?;
    let mut rows = Vec::new();
    let mut stream = 0u64;
    for &t in &spec.horizons {
        for &n in &spec.grids {
            let cell = format!("horizon={t} grid={n}");
            let source: Box<dyn PathSource> = if n.is_power_of_two() {
                Box::new(CirculantSampler::new(h, n, t).in_cell(&cell)?)
            } else {
                let grid = TimeGrid::uniform(n, t).in_cell(&cell)?;
                Box::new(CholeskySampler::new(h, grid).in_cell(&cell)?)
            };
            let rng = RngSpec::new(spec.seed, stream);
            tasks.push(TaskSeed {
                task: cell.clone(),
                seed: spec.seed,
                stream,
            });
            let paths = map_paths(source.as_ref(), spec.samples, rng, |_, p| Ok(p.values().to_vec()))
                .in_cell(&cell)?;
            let times = source.grid().points();
            for (i, values) in paths.iter().enumerate() {
                for (&time, &v) in times.iter().zip(values) {
                    rows.push(vec![
                        Cell::Real(spec.hurst),
                        Cell::Real(t),
                        Cell::Count(times.len() as u64),
                        Cell::Count(i as u64),
                        Cell::Real(time),
                        Cell::Real(v),
                    ]);
                }
            }
            stream += 1;
        }
    }
    Ok(completed(Payload::Table {
        columns: &PATH_COLUMNS,
        rows,
    }))
}

/// Exit, lower-tail and Laplace estimates all derive from grid suprema of
/// unit paths, so one sample per grid serves every horizon or level.
fn supremum_estimates(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    let h = hurst(spec)?;
    let (keys, columns): (&[f64], &'static [&'static str]) = match spec.kind {
        Kind::LowerTail => (&spec.eps, &LOWER_TAIL_COLUMNS),
        _ => (&spec.horizons, &ESTIMATE_COLUMNS),
    };
    let level_estimate = |s: &SupremumSample, level: usize, key: f64| match spec.kind {
        Kind::Exit => s.exit_prob(level, key, spec.barrier),
        Kind::LowerTail => s.lower_tail(level, key),
        _ => s.laplace(level, key),
    };

    let mut rows = Vec::new();
    if spec.extrapolate {
        let finest = *spec.grids.iter().max().expect("validated non-empty");
        let exponent = spec.refine_exponent.map_or(RefineExponent::Free, RefineExponent::Fixed);
        let cell = format!("grids={:?}", spec.grids);
        tasks.push(TaskSeed {
            task: format!("nested suprema, finest grid {finest}"),
            seed: spec.seed,
            stream: 0,
        });
        let s = SupremumSample::draw(h, finest, spec.grids.len(), spec.samples, RngSpec::new(spec.seed, 0))
            .in_cell(&cell)?;
        for &key in keys {
            let cell = format!("{cell} key={key}");
            let r = match spec.kind {
                Kind::Exit => {
                    let a = h.scale(key);
                    s.refined_with(|x| f64::from(u8::from(a * x <= spec.barrier)), exponent)
                }
                Kind::LowerTail => s.refined_with(|x| f64::from(u8::from(x <= key)), exponent),
                _ => {
                    let a = h.scale(key);
                    s.refined_with(|x| (-a * x).exp(), exponent)
                }
            }
            .in_cell(&cell)?;
            rows.push(estimate_row(spec, key, &r.estimate));
        }
    } else {
        let mut per_grid = Vec::with_capacity(spec.grids.len());
        for (k, &n) in spec.grids.iter().enumerate() {
            let cell = format!("grid={n}");
            tasks.push(TaskSeed {
                task: cell.clone(),
                seed: spec.seed,
                stream: k as u64,
            });
            let source = unit_source(h, n).in_cell(&cell)?;
            let s = SupremumSample::from_source(source.as_ref(), h, 1, spec.samples, RngSpec::new(spec.seed, k as u64))
                .in_cell(&cell)?;
            per_grid.push(s);
        }
        for &key in keys {
            for s in &per_grid {
                rows.push(estimate_row(spec, key, &level_estimate(s, 0, key)));
            }
        }
    }
    Ok(completed(Payload::Table { columns, rows }))
}

fn molchan(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    let h = hurst(spec)?;
    let mut per_grid = Vec::with_capacity(spec.grids.len());
    for (k, &n) in spec.grids.iter().enumerate() {
        let cell = format!("grid={n}");
        tasks.push(TaskSeed {
            task: cell.clone(),
            seed: spec.seed,
            stream: k as u64,
        });
        let source = unit_source(h, n).in_cell(&cell)?;
        let est = estimate_molchan_multi(source.as_ref(), h, &spec.horizons, spec.samples, RngSpec::new(spec.seed, k as u64))
            .in_cell(&cell)?;
        per_grid.push(est);
    }
    let rows = spec
        .horizons
        .iter()
        .enumerate()
        .flat_map(|(i, &t)| per_grid.iter().map(move |est| (t, est[i])))
        .map(|(t, e)| estimate_row(spec, t, &e))
        .collect();
    Ok(completed(Payload::Table {
        columns: &ESTIMATE_COLUMNS,
        rows,
    }))
}

fn chain_suites(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    let h = hurst(spec)?;
    let mut reports: Vec<ChainReport> = Vec::new();
    for (k, &n) in spec.grids.iter().enumerate() {
        let cell = format!("grid={n}");
        let rng = RngSpec::new(spec.seed, k as u64);
        tasks.push(TaskSeed {
            task: cell.clone(),
            seed: spec.seed,
            stream: k as u64,
        });
        let source = unit_source(h, n).in_cell(&cell)?;
        let batch = if spec.kind == Kind::Chain {
            check_crucial_chain_with(source.as_ref(), h, &spec.horizons, spec.gamma, spec.samples, rng)
        } else {
            check_drift_lower_bound_with(source.as_ref(), h, &spec.horizons, spec.kappa, spec.samples, rng)
        }
        .in_cell(&cell)?;
        let failed = batch.iter().position(|r| !r.passed());
        reports.extend(batch);
        if let Some(i) = failed {
            let r = &reports[reports.len() - spec.horizons.len() + i];
            return Ok(Outcome {
                status: RunStatus::Violation {
                    cell: format!("{cell} horizon={}", spec.horizons[i]),
                    witness: to_json(r),
                },
                payload: Payload::Json(to_json(&reports)),
            });
        }
    }
    Ok(completed(Payload::Json(to_json(&reports))))
}

fn slepian(spec: &ExperimentSpec, tasks: &mut Vec<TaskSeed>) -> Result<Outcome, CellError> {
    let h = hurst(spec)?;
    let mut reports = Vec::new();
    let mut stream = 0u64;
    for &t in &spec.horizons {
        for &n in &spec.grids {
            let cell = format!("horizon={t} grid={n}");
            tasks.push(TaskSeed {
                task: cell.clone(),
                seed: spec.seed,
                stream,
            });
            let barriers = (spec.barrier, spec.barrier);
            let r = slepian_factorization_check(h, t, spec.split, barriers, n, spec.samples, RngSpec::new(spec.seed, stream))
                .in_cell(&cell)?;
            let passed = r.passed();
            reports.push(r);
            if !passed {
                let witness = to_json(reports.last().expect("just pushed"));
                return Ok(Outcome {
                    status: RunStatus::Violation { cell, witness },
                    payload: Payload::Json(to_json(&reports)),
                });
            }
            stream += 1;
        }
    }
    Ok(completed(Payload::Json(to_json(&reports))))
}

fn appendix(spec: &ExperimentSpec) -> Result<Outcome, CellError> {
    let cfg = AppendixConfig {
        alphas: spec.alphas.clone(),
        lambda: spec.lambda,
        ..AppendixConfig::default()
    };
    let result = verify_appendix(&cfg).in_cell("appendix")?;
    let status = match result.reports.iter().find(|r| !r.passed) {
        None => RunStatus::Completed,
        Some(r) => RunStatus::Violation {
            cell: r.name.clone(),
            witness: to_json(r),
        },
    };
    Ok(Outcome {
        payload: Payload::Json(to_json(&result)),
        status,
    })
}

fn fit(spec: &ExperimentSpec) -> Result<Outcome, CellError> {
    let path = spec.input.as_deref().expect("validated");
    let cell = format!("input={}", path.display());
    let cols = read_csv(path).in_cell(&cell)?;
    let key = if cols.contains_key("eps") { "eps" } else { "horizon" };
    let col = |name: &str| {
        cols.get(name)
            .ok_or_else(|| CliError::Validation(format!("{}: missing column {name}", path.display())))
    };
    let (hs, ks, gs, vs, ss) = (
        col("hurst").in_cell(&cell)?,
        col(key).in_cell(&cell)?,
        col("grid_points").in_cell(&cell)?,
        col("value").in_cell(&cell)?,
        col("stderr").in_cell(&cell)?,
    );

    // hurst values in order of first appearance
    let mut groups: Vec<f64> = Vec::new();
    for &h in hs {
        if !groups.iter().any(|g| g.to_bits() == h.to_bits()) {
            groups.push(h);
        }
    }
    let mut records = Vec::new();
    for h in groups {
        let cell = format!("{cell} hurst={h}");
        // finest grid per key
        let mut best: BTreeMap<u64, usize> = BTreeMap::new();
        for i in (0..hs.len()).filter(|&i| hs[i].to_bits() == h.to_bits()) {
            let slot = best.entry(ks[i].to_bits()).or_insert(i);
            if gs[i] >= gs[*slot] {
                *slot = i;
            }
        }
        let mut idx: Vec<usize> = best.into_values().collect();
        idx.sort_by(|&a, &b| ks[a].total_cmp(&ks[b]));
        let table = if key == "eps" {
            let rows: Vec<(f64, f64, f64, usize)> = idx
                .iter()
                .rev()
                .map(|&i| (ks[i], vs[i], ss[i], gs[i] as usize))
                .collect();
            DecayTable::from_lower_tail(&rows)
        } else {
            DecayTable::new(
                idx.iter()
                    .map(|&i| DecayRow {
                        horizon: ks[i],
                        estimate: vs[i],
                        stderr: ss[i],
                        grid_points: gs[i] as usize,
                    })
                    .collect(),
            )
        }
        .in_cell(&cell)?;
        let power_law = fit_power_law(&table).in_cell(&cell)?;
        let (log_corrected, log_corrected_skipped) = match fit_with_log_correction(&table) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        records.push(FitRecord {
            hurst: h,
            key: key.to_owned(),
            rows: table.rows().to_vec(),
            power_law,
            log_corrected,
            log_corrected_skipped,
        });
    }
    Ok(completed(Payload::Json(to_json(&records))))
}
