//! Which accuracy formula reproduces the published (RMSE, accuracy) pairs?

use teleop_kf::metrics::{calibrate_accuracy, PUBLISHED_PAIRS};

fn main() -> teleop_kf::Result<()> {
    let cal = calibrate_accuracy(&PUBLISHED_PAIRS)?;
    let (lo, hi) = cal
        .implied_ranges
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
    println!("truth range implied by each pair: {lo:.3} .. {hi:.3}");
    for c in &cal.candidates {
        println!(
            "{:<16} fitted range {:>8}  rms err {:6.3} pts  max err {:6.3} pts",
            c.metric.as_str(),
            c.fitted_range.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into()),
            c.rms_error,
            c.max_abs_error
        );
    }
    println!("best: {}", cal.best);
    Ok(())
}
