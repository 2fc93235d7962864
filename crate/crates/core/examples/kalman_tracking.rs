//! Track a noisy, impaired measurement stream with a known model.
//!
//! Delayed samples make the innovations correlated, so whiteness sits well outside the band.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_kf::estimator::{run_filter, FilterOptions, FilterState, NoiseModel, NoiseProvenance};
use teleop_kf::metrics::{evaluate_run, rmse, AccuracyMetric};
use teleop_kf::netsim::{impair, NetworkScenario};
use teleop_kf::synthetic::{gaussian_matrix, random_stable_system, simulate_stochastic, PoleSpec};

fn main() -> teleop_kf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (model, poles) = random_stable_system(&mut rng, 3, 1, 2, PoleSpec::default())?;
    println!("poles: {:?}", poles.iter().map(|p| format!("{:.3}{:+.3}i", p.re, p.im)).collect::<Vec<_>>());

    let q = DMatrix::identity(3, 3) * 1e-3;
    let r = DMatrix::identity(2, 2) * 0.05;
    let u = gaussian_matrix(&mut rng, 3000, 1);
    let sim = simulate_stochastic(&mut rng, &model, &u, &q, &r, &DVector::zeros(3))?;

    let scenario = NetworkScenario::with_loss_percent(5.0, 1.0, 2.0, 11)?;
    let stream = impair(&sim.outputs, &scenario, 1e-3)?;
    let noise = NoiseModel::new(q, r, NoiseProvenance::Initial)?;
    let run = run_filter(&model, &noise, &u, &stream.observed, &FilterState::default_for(3), FilterOptions::default())?;

    let names = vec!["y0".to_string(), "y1".to_string()];
    let report = evaluate_run(&run, &sim.clean_outputs, &names, AccuracyMetric::NrmseRange, 30, 10)?;
    for (c, name) in names.iter().enumerate() {
        let raw: Vec<f64> = stream.observed.column(c).iter().skip(30).copied().collect();
        let truth: Vec<f64> = sim.clean_outputs.column(c).iter().skip(30).copied().collect();
        println!(
            "{name}: raw stream rmse {:.4}, filtered rmse {:.4}, accuracy {:.2}%, whiteness {:.4} (band {:.4})",
            rmse(&raw, &truth)?,
            report.rmse[c],
            report.accuracy_pct[c],
            report.whiteness[c],
            report.whiteness_band
        );
    }
    Ok(())
}
