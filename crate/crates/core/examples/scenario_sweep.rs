//! Identify on one half of a surrogate trial, then filter the other half under
//! each of the six published network scenarios.

use teleop_kf::pipeline::{identify_model, prepare_from, sweep_scenarios, ExperimentConfig, ScenarioOptions};
use teleop_kf::synthetic::{surrogate_trial, SurrogateSpec};
use teleop_kf::sysid::OrderCriterion;

fn main() -> teleop_kf::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = surrogate_trial(seed, &SurrogateSpec::default())?;
    let (ident, valid) = ds.split(0.5)?;
    let data = prepare_from(ident, Some(valid))?;

    let mut cfg = ExperimentConfig::default();
    cfg.identify.order = OrderCriterion::Fixed(6);
    let model = identify_model(&cfg, &data)?.model;
    let options = ScenarioOptions::from_config(&cfg, model.order());
    let target = data.validation.as_ref().expect("split");
    let rows = sweep_scenarios(&model, target, &cfg.scenarios()?, &options, true);

    println!("label   nj    nd      np      acc x   acc y   acc z   rmse x  rmse y  rmse z");
    for row in &rows {
        let s = &row.scenario;
        match &row.outcome {
            Ok(o) => {
                let a = &o.report.accuracy_pct;
                let e = &o.report.rmse;
                println!(
                    "{:<6} {:>4.1} {:>7.2} {:>7.5}  {:6.2}  {:6.2}  {:6.2}  {:.4}  {:.4}  {:.4}",
                    s.label.as_deref().unwrap_or(""),
                    s.nj_ms,
                    s.nd_ms,
                    s.np,
                    a[0], a[1], a[2], e[0], e[1], e[2]
                );
            }
            Err(e) => println!("{:<6} failed: {e}", s.label.as_deref().unwrap_or("")),
        }
    }
    Ok(())
}
