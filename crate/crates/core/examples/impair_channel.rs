//! Pass a clean signal through the network channel model and inspect what arrives.

use nalgebra::DMatrix;
use teleop_kf::netsim::{impair, scenario_suite, NetworkScenario};

fn main() -> teleop_kf::Result<()> {
    let dt = 1e-3;
    let clean = DMatrix::from_fn(2000, 1, |k, _| (k as f64 * dt * 2.0 * std::f64::consts::PI).sin());

    let custom = NetworkScenario::with_loss_percent(20.0, 2.0, 5.0, 42)?;
    let s = impair(&clean, &custom, dt)?;
    let lags: Vec<usize> = (0..s.len())
        .filter(|&k| !s.loss_mask[k])
        .map(|k| k + 1 - s.source_index[k])
        .collect();
    println!(
        "nd 20 ms, nj 2 ms, 5% loss: loss rate {:.3}, lag {}..{} samples",
        s.loss_rate(),
        lags.iter().min().unwrap(),
        lags.iter().max().unwrap()
    );
    println!(" k   clean     observed  source lost");
    for k in 100..110 {
        println!(
            "{k:>4} {:+.5}  {:+.5}  {:>5}  {}",
            clean[(k, 0)],
            s.observed[(k, 0)],
            s.source_index[k],
            s.loss_mask[k]
        );
    }

    println!("\npublished suite:");
    for sc in scenario_suite() {
        let s = impair(&clean, &sc.clone().with_seed(1), dt)?;
        let err = (&s.observed - &clean).norm() / (clean.nrows() as f64).sqrt();
        println!(
            "{:<5} nd {:>6.1} ms nj {:>3.1} ms np {:.5}  loss {:.4}  rms error {err:.4}",
            sc.label.as_deref().unwrap_or(""),
            sc.nd_ms,
            sc.nj_ms,
            sc.np,
            s.loss_rate()
        );
    }
    Ok(())
}
