//! The file-based workflow: write a trial to CSV, then identify, validate and
//! sweep from `examples/experiment.toml`, the same path the `teleop-kf` binary takes.

use std::path::Path;

use teleop_kf::dataio::write_dataset;
use teleop_kf::pipeline::{cmd_identify, cmd_sweep, cmd_validate, ExperimentConfig};
use teleop_kf::synthetic::{surrogate_trial, SurrogateSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::env::temp_dir().join("teleop-kf-example");
    std::fs::create_dir_all(&work)?;
    let trial = work.join("trial.csv");
    write_dataset(&trial, &surrogate_trial(1, &SurrogateSpec::default())?)?;

    let toml = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/experiment.toml");
    let mut cfg = ExperimentConfig::load(&toml, &[format!("data.path={:?}", trial.display().to_string())])?;
    cfg.output_dir = work.join("out");
    println!("config hash {}", cfg.hash());

    let id = cmd_identify(&cfg)?;
    println!("identified order {} (spectral radius {:.4})", id.log.order, id.log.spectral_radius);
    let fit = cmd_validate(&cfg)?;
    println!("open-loop accuracy on the held-out part: {:.2?}", fit.report.accuracy_pct);
    let sweep = cmd_sweep(&cfg)?;
    for (row, acc) in sweep.rows.iter().zip(sweep.mean_accuracies()) {
        println!("{:<5} mean accuracy {:.2?}", row.scenario.label.as_deref().unwrap_or(""), acc);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
