//! Estimate Q and R from filter residuals when the true covariances are unknown.
//!
//! The posterior output residual sees roughly `R S^-1 R` rather than `R`, so the
//! estimate is close only when the sensor noise dominates and the initial Q is small.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_kf::estimator::{estimate_noise_empirical, BootstrapOptions, ResidualInput};
use teleop_kf::synthetic::{gaussian_matrix, random_stable_system, simulate_stochastic, PoleSpec};

fn main() -> teleop_kf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = PoleSpec { feedthrough: false, ..Default::default() };
    let (model, _) = random_stable_system(&mut rng, 2, 1, 2, spec)?;
    let q = DMatrix::identity(2, 2) * 1e-4;
    let r = DMatrix::identity(2, 2) * 0.04;
    let u = gaussian_matrix(&mut rng, 10_000, 1);
    let y = simulate_stochastic(&mut rng, &model, &u, &q, &r, &DVector::zeros(2))?.outputs;

    let cases = [
        ("defaults", BootstrapOptions::default()),
        ("trust the model", BootstrapOptions { eps_q: 1e-6, eps_r: 1.0, ..Default::default() }),
        (
            "u(k-1) residual",
            BootstrapOptions { eps_q: 1e-6, eps_r: 1.0, residual_input: ResidualInput::Previous, ..Default::default() },
        ),
    ];
    println!("true diag R {:?}, Q {:?}", r.diagonal().as_slice(), q.diagonal().as_slice());
    for (name, opts) in cases {
        let est = estimate_noise_empirical(&model, &u, &y, &opts)?;
        println!(
            "{name:<16} R diag [{:.4}, {:.4}]  Q diag [{:.2e}, {:.2e}]  R err {:.1}%",
            est.r[(0, 0)],
            est.r[(1, 1)],
            est.q[(0, 0)],
            est.q[(1, 1)],
            100.0 * (&est.r - &r).norm() / r.norm()
        );
    }
    Ok(())
}
