use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_kf::dataio::{write_dataset, TrajectoryDataset};
use teleop_kf::pipeline::{cmd_identify, cmd_sweep, cmd_validate, ExperimentConfig};
use teleop_kf::synthetic::{gaussian_matrix, random_stable_system, PoleSpec};
use teleop_kf::sysid::{simulate, OrderCriterion, StateSpaceModel};
use teleop_kf::Error;

fn system(seed: u64, n: usize, m: usize, p: usize) -> StateSpaceModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_stable_system(&mut rng, n, m, p, PoleSpec::default()).unwrap().0
}

fn write_trial(path: &Path, model: &StateSpaceModel, samples: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = gaussian_matrix(&mut rng, samples, model.n_inputs());
    let y = simulate(model, &u, &DVector::zeros(model.order())).unwrap();
    let ds = TrajectoryDataset::from_matrices(u, y, 0.01).unwrap();
    write_dataset(path, &ds).unwrap();
}

fn config(dir: &Path, data: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = dir.join("out");
    cfg.data.path = Some(data.to_path_buf());
    cfg
}

fn second_order_trial(dir: &Path) -> PathBuf {
    let p = dir.join("trial.csv");
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.6]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
    let model = StateSpaceModel::new(a, b, c, DMatrix::zeros(2, 1), 0.01).unwrap();
    write_trial(&p, &model, 1500, 1);
    p
}

#[test]
fn identify_selects_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let cfg = config(tmp.path(), &data);
    let o = cmd_identify(&cfg).unwrap();
    assert_eq!(o.log.order, 2, "energy ratio {}", o.log.energy_ratio);
    for f in ["model.json", "normalization.json", "singular_values.csv", "identify_log.json"] {
        assert!(cfg.output_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn oversized_block_rows_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("short.csv");
    write_trial(&p, &system(2, 2, 1, 1), 60, 2);
    let mut cfg = config(tmp.path(), &p);
    cfg.identify.block_rows = 40;
    let err = cmd_identify(&cfg).unwrap_err();
    assert!(matches!(err, Error::InsufficientSamples { .. }), "{err}");
    assert!(err.to_string().contains("insufficient samples for block size"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn scree_has_one_row_per_output_block() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("three.csv");
    write_trial(&p, &system(3, 4, 3, 3), 800, 3);
    let mut cfg = config(tmp.path(), &p);
    cfg.identify.order = OrderCriterion::Fixed(4);
    cmd_identify(&cfg).unwrap();
    let text = fs::read_to_string(cfg.output_dir.join("singular_values.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "index,value");
    assert_eq!(rows.len() - 1, 60);
}

#[test]
fn empty_scenario_list_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let mut cfg = config(tmp.path(), &data);
    cfg.sweep.suite = false;
    let o = cmd_sweep(&cfg).unwrap();
    assert!(o.rows.is_empty());
    let text = fs::read_to_string(cfg.output_dir.join("sweep_summary.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("label,nj_ms,nd_ms,np,acc_"));
}

#[test]
fn validation_with_wrong_channels_is_a_dimension_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let cfg = config(tmp.path(), &data);
    cmd_identify(&cfg).unwrap();

    let other = tmp.path().join("other.csv");
    write_trial(&other, &system(4, 2, 1, 3), 500, 4);
    let mut v = cfg.clone();
    v.identify.model_path = Some(cfg.output_dir.join("model.json"));
    v.data.validation_path = Some(other);
    let err = cmd_validate(&v).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn held_out_validation_has_one_row_per_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let cfg = config(tmp.path(), &data);
    cmd_identify(&cfg).unwrap();

    let held_out = tmp.path().join("held_out.csv");
    let model = StateSpaceModel::new(
        DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.6]),
        DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]),
        DMatrix::zeros(2, 1),
        0.01,
    )
    .unwrap();
    write_trial(&held_out, &model, 700, 99);
    let mut v = cfg.clone();
    v.identify.model_path = Some(cfg.output_dir.join("model.json"));
    v.data.validation_path = Some(held_out);
    let o = cmd_validate(&v).unwrap();
    assert_eq!(o.report.predictions.nrows(), 700);
    let text = fs::read_to_string(cfg.output_dir.join("validation_estimates.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "k,y_true_y0,y_true_y1,y_est_y0,y_est_y1");
    assert_eq!(rows.len() - 1, 700);
}

fn run_everything(cfg: &ExperimentConfig) {
    cmd_identify(cfg).unwrap();
    cmd_validate(cfg).unwrap();
    cmd_sweep(cfg).unwrap();
}

#[test]
fn outputs_carry_hash_and_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let mut cfg = config(tmp.path(), &data);
    cfg.data.split = Some(0.6);
    run_everything(&cfg);
    let hash = cfg.hash();
    let metric = cfg.metrics.metric.to_string();
    let mut checked = 0;
    for entry in fs::read_dir(&cfg.output_dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(&hash), "{} lacks config hash", path.display());
        assert!(text.contains(&metric), "{} lacks metric", path.display());
        checked += 1;
    }
    // 4 identify + 2 validate + summary + 6 runs + 6 reports
    assert_eq!(checked, 19);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let mut a = config(tmp.path(), &data);
    a.data.split = Some(0.6);
    a.output_dir = tmp.path().join("a");
    let mut b = a.clone();
    b.output_dir = tmp.path().join("b");
    run_everything(&a);
    run_everything(&b);
    let mut names: Vec<_> = fs::read_dir(&a.output_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        let x = fs::read(a.output_dir.join(&n)).unwrap();
        let y = fs::read(b.output_dir.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs");
    }
}

#[test]
fn different_seeds_change_the_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let data = second_order_trial(tmp.path());
    let mut a = config(tmp.path(), &data);
    a.output_dir = tmp.path().join("a");
    let mut b = a.clone();
    b.output_dir = tmp.path().join("b");
    b.seed = 1;
    cmd_sweep(&a).unwrap();
    cmd_sweep(&b).unwrap();
    let x = fs::read(a.output_dir.join("scenario_6_run.csv")).unwrap();
    let y = fs::read(b.output_dir.join("scenario_6_run.csv")).unwrap();
    assert_ne!(x, y);
}

fn cli(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_teleop-kf"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    second_order_trial(dir);
    fs::write(dir.join("exp.toml"), "seed = 5\n[data]\npath = \"trial.csv\"\nsplit = 0.6\n").unwrap();

    let (code, stdout, _) = cli(dir, &["-c", "exp.toml", "identify"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("order 2"), "{stdout}");
    let (code, stdout, _) = cli(dir, &["-c", "exp.toml", "sweep", "--model", "out/model.json"]);
    assert_eq!(code, 0, "{stdout}");
    assert_eq!(stdout.lines().count(), 7);
    let (code, _, _) = cli(dir, &["-c", "exp.toml", "--out", "imp", "impair", "--nd-ms", "20", "--np-percent", "2"]);
    assert_eq!(code, 0);
    assert!(dir.join("imp/impaired.csv").exists());
    let (code, stdout, _) = cli(dir, &["--out", "cal", "calibrate-accuracy"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("best:"));

    // usage and configuration errors
    assert_eq!(cli(dir, &["identify", "--no-such-flag"]).0, 1);
    fs::write(dir.join("bad.toml"), "[data]\nbogus = 1\n").unwrap();
    assert_eq!(cli(dir, &["-c", "bad.toml", "identify"]).0, 1);
    assert_eq!(cli(dir, &["-c", "exp.toml", "--set", "filter.eps_q=-1", "sweep"]).0, 1);
    // missing input
    let (code, _, stderr) = cli(dir, &["identify", "--data", "missing.csv"]);
    assert_eq!(code, 2, "{stderr}");
    // numerically degenerate: constant input carries no excitation
    fs::write(
        dir.join("flat.csv"),
        std::iter::once("t,u:a,y:b".to_string())
            .chain((0..200).map(|k| format!("{},1,{}", k as f64 * 0.01, (k as f64 * 0.3).sin())))
            .collect::<Vec<_>>()
            .join("\n"),
    )
    .unwrap();
    let (code, _, stderr) = cli(dir, &["identify", "--data", "flat.csv", "--block-rows", "5"]);
    assert_eq!(code, 3, "{stderr}");
}

