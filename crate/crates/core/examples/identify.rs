//! Identify a state-space model from a teleoperation surrogate trial.
//!
//! ```bash
//! cargo run --release --example identify
//! ```

use teleop_kf::dataio::normalize;
use teleop_kf::sysid::{energy_profile, identify, OrderCriterion};
use teleop_kf::synthetic::{surrogate_trial, SurrogateSpec};

fn main() -> teleop_kf::Result<()> {
    let raw = surrogate_trial(7, &SurrogateSpec::default())?;
    let (ds, _params) = normalize(&raw);
    println!("{} samples at {} s, inputs {:?}, outputs {:?}", ds.len(), ds.dt, ds.input_names, ds.output_names);

    let ident = identify(&ds.inputs, &ds.outputs, 20, OrderCriterion::Energy(0.85), ds.dt)?;
    let sv = &ident.decomposition.singular_values;
    let energy = energy_profile(sv);
    println!("leading singular values:");
    for (i, (s, e)) in sv.iter().zip(&energy).take(8).enumerate() {
        println!("  {:>2}  {s:10.4e}  cumulative {:.3}", i + 1, e);
    }
    println!("energy criterion picks order {} ({:.3})", ident.order, ident.energy_ratio);

    // the surrogate has position and velocity per axis
    let six = identify(&ds.inputs, &ds.outputs, 20, OrderCriterion::Fixed(6), ds.dt)?;
    let m = &six.model;
    println!("order 6: spectral radius {:.4}, unstable {}", m.spectral_radius, m.flags.unstable);
    for ev in m.eigenvalues() {
        println!("  pole {:.4} {:+.4}i", ev.re, ev.im);
    }
    Ok(())
}
