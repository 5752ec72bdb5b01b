use std::path::Path;
use std::process::Command;

use fbm_exit_cli::{
    emit_csv, manifest_path, read_csv, run, sha256_file, Cell, EstimateRow, FitRecord, Kind,
    RunManifest, RunStatus, SpecOverrides, ESTIMATE_COLUMNS,
};
use fbm_exit_core::drift::AppendixResult;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbm-exit"))
}

fn spec(kind: Kind, out: &Path) -> SpecOverrides {
    SpecOverrides {
        kind: Some(kind),
        out: Some(out.to_path_buf()),
        ..Default::default()
    }
}

#[test]
fn exit_run_is_deterministic_and_digested() {
    let dir = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let s = SpecOverrides {
            hurst: Some(0.5),
            horizons: vec![1.0, 4.0],
            grids: vec![4096],
            samples: Some(10_000),
            seed: Some(7),
            ..spec(Kind::Exit, &out)
        }
        .resolve()
        .unwrap();
        let m = run(&s).unwrap();
        assert_eq!(m.status, RunStatus::Completed);
        let digest = sha256_file(&out).unwrap();
        assert_eq!(m.results[&out.display().to_string()], digest);
        let cols = read_csv(&out).unwrap();
        assert_eq!(cols["horizon"], vec![1.0, 4.0]);
        assert!(cols["seed"].iter().all(|&s| s == 7.0));
        assert!(cols["samples"].iter().all(|&s| s == 10_000.0));

        let text = std::fs::read_to_string(manifest_path(&out)).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back.spec, s);
        digests.push(digest);
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn appendix_run_reports_all_passed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("appendix.json");
    let m = run(&spec(Kind::VerifyAppendix, &out).resolve().unwrap()).unwrap();
    assert_eq!(m.exit_code(), 0);
    let r: AppendixResult = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert!(!r.reports.is_empty());
    assert!(r.reports.iter().all(|x| x.passed));
}

#[test]
fn fit_reads_back_an_emitted_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("decay.csv");
    let rows: Vec<Vec<Cell>> = [8.0f64, 16.0, 32.0, 64.0, 128.0]
        .iter()
        .flat_map(|&t| {
            // a coarse grid row that fit must ignore in favour of the finer one
            [(257, 0.9), (1025, 2.0 * t.powf(-0.4))].map(|(g, v)| {
                EstimateRow {
                    hurst: 0.6,
                    key: t,
                    grid_points: g,
                    samples: 1000,
                    value: v,
                    stderr: 0.01 * v,
                    seed: 1,
                }
                .cells()
            })
        })
        .collect();
    emit_csv(&table, &ESTIMATE_COLUMNS, &rows).unwrap();
    let out = dir.path().join("fit.json");
    let s = SpecOverrides {
        input: Some(table),
        ..spec(Kind::Fit, &out)
    };
    run(&s.resolve().unwrap()).unwrap();
    let recs: Vec<FitRecord> = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].rows.len(), 5);
    assert!((recs[0].power_law.theta - 0.4).abs() < 1e-10);
    assert!((recs[0].power_law.intercept - 2f64.ln()).abs() < 1e-10);
    let lc = recs[0].log_corrected.unwrap();
    assert!(lc.log_correction.unwrap().abs() < 1e-8);
}

#[test]
fn lower_tail_table_is_keyed_by_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tail.csv");
    let s = SpecOverrides {
        eps: vec![1.0, 0.5],
        grids: vec![256],
        samples: Some(500),
        ..spec(Kind::LowerTail, &out)
    };
    run(&s.resolve().unwrap()).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("hurst,eps,grid_points,samples,value,stderr,seed\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn estimates_can_be_written_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let s = SpecOverrides {
        horizons: vec![2.0, 8.0],
        grids: vec![128, 100],
        samples: Some(200),
        format: Some(fbm_exit_cli::Format::Json),
        ..spec(Kind::Molchan, &out)
    };
    let m = run(&s.resolve().unwrap()).unwrap();
    assert_eq!(m.tasks.len(), 2);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1]["grid_points"], 101);
    assert_eq!(rows[2]["horizon"], 8.0);
}

#[test]
fn binary_exit_statuses() {
    let dir = tempfile::tempdir().unwrap();

    let bad_kappa = bin()
        .args(["drift-bound", "--kappa", "0.5"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_kappa.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_kappa.stderr).contains("kappa > 1"));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"hurts": 0.3}"#).unwrap();
    let bad_cfg = bin().arg("exit").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(bad_cfg.status.code(), Some(1));

    let bad_threads = bin()
        .args(["exit", "--samples", "10", "--grid", "16"])
        .env("FBM_EXIT_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));

    let missing = bin()
        .args(["fit", "--input"])
        .arg(dir.path().join("nope.csv"))
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));

    std::fs::write(&cfg, r#"{"hurst": 0.6, "horizons": [4], "grids": [256], "samples": 200}"#).unwrap();
    let ok = bin()
        .args(["drift-bound", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("d.json"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let m: RunManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("d.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m.spec.hurst, 0.6);
    assert_eq!(m.spec.kappa, 1.5);
}
