//! Synthetic systems and trajectories with known ground truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataio::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::sysid::StateSpaceModel;

/// Pole placement for [`random_stable_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoleSpec {
    pub min_radius: f64,
    pub max_radius: f64,
    /// Minimum distance between any two eigenvalues.
    pub min_separation: f64,
    /// Include D (feedthrough); otherwise D = 0.
    pub feedthrough: bool,
}

impl Default for PoleSpec {
    fn default() -> Self {
        Self {
            min_radius: 0.3,
            max_radius: 0.9,
            min_separation: 0.1,
            feedthrough: true,
        }
    }
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random orthogonal matrix (QR of a Gaussian matrix, sign-corrected).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random stable system of order `n`. Eigenvalues are a mix of real poles and
/// complex pairs with radius in the spec's range, hidden behind a random
/// orthogonal change of basis. Returns the model and its eigenvalues.
pub fn random_stable_system<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    n_inputs: usize,
    n_outputs: usize,
    spec: PoleSpec,
) -> Result<(StateSpaceModel, Vec<nalgebra::Complex<f64>>)> {
    if n == 0 || n_inputs == 0 || n_outputs == 0 {
        return Err(Error::InvalidParameter("system dimensions must be positive".into()));
    }
    let (lo, hi) = (spec.min_radius, spec.max_radius);
    for _ in 0..10_000 {
        let mut poles: Vec<nalgebra::Complex<f64>> = Vec::with_capacity(n);
        let mut blocks: Vec<DMatrix<f64>> = Vec::new();
        while poles.len() < n {
            let r: f64 = rng.random_range(lo..=hi);
            if n - poles.len() >= 2 && rng.random_bool(0.5) {
                let theta: f64 = rng.random_range(0.2..2.8);
                let (c, s) = (r * theta.cos(), r * theta.sin());
                poles.push(nalgebra::Complex::new(c, s));
                poles.push(nalgebra::Complex::new(c, -s));
                blocks.push(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]));
            } else {
                let p = if rng.random_bool(0.5) { r } else { -r };
                poles.push(nalgebra::Complex::new(p, 0.0));
                blocks.push(DMatrix::from_element(1, 1, p));
            }
        }
        let separated = poles.iter().enumerate().all(|(i, a)| {
            poles[i + 1..]
                .iter()
                .all(|b| (a - b).norm() >= spec.min_separation)
        });
        if !separated {
            continue;
        }
        let mut lambda = DMatrix::zeros(n, n);
        let mut at = 0;
        for b in &blocks {
            let k = b.nrows();
            lambda.view_mut((at, at), (k, k)).copy_from(b);
            at += k;
        }
        let t = random_orthogonal(rng, n);
        let a = &t * lambda * t.transpose();
        let b = gaussian_matrix(rng, n, n_inputs);
        let c = gaussian_matrix(rng, n_outputs, n);
        let d = if spec.feedthrough {
            gaussian_matrix(rng, n_outputs, n_inputs)
        } else {
            DMatrix::zeros(n_outputs, n_inputs)
        };
        return Ok((StateSpaceModel::new(a, b, c, d, 1.0)?, poles));
    }
    Err(Error::InvalidParameter(format!(
        "cannot place {n} poles with separation {}",
        spec.min_separation
    )))
}

/// Lower-triangular factor `L` with `L Lᵀ = M` for a PSD `M`, through the
/// eigendecomposition when Cholesky fails (singular covariances).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals)
}

/// Stochastic trajectory of a model.
#[derive(Debug, Clone)]
pub struct StochasticRun {
    pub states: DMatrix<f64>,
    /// `C x + D u` without measurement noise.
    pub clean_outputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

/// `x(k+1) = A x(k) + B u(k) + w(k)`, `y(k) = C x(k) + D u(k) + v(k)`,
/// `w ~ N(0, Q)`, `v ~ N(0, R)`, starting at `x0`.
pub fn simulate_stochastic<R: Rng + ?Sized>(
    rng: &mut R,
    model: &StateSpaceModel,
    inputs: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<StochasticRun> {
    let (n, p) = (model.order(), model.n_outputs());
    if inputs.ncols() != model.n_inputs() || q.shape() != (n, n) || r.shape() != (p, p) || x0.len() != n {
        return Err(Error::Dimension("inconsistent simulation shapes".into()));
    }
    let lq = psd_sqrt(q);
    let lr = psd_sqrt(r);
    let len = inputs.nrows();
    let mut states = DMatrix::zeros(len, n);
    let mut clean = DMatrix::zeros(len, p);
    let mut noisy = DMatrix::zeros(len, p);
    let mut x = x0.clone();
    for k in 0..len {
        let u = inputs.row(k).transpose();
        let y = &model.c * &x + &model.d * &u;
        let v = &lr * DVector::from_fn(p, |_, _| rng.sample(StandardNormal));
        states.row_mut(k).copy_from(&x.transpose());
        clean.row_mut(k).copy_from(&y.transpose());
        noisy.row_mut(k).copy_from(&(y + v).transpose());
        let w = &lq * DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        x = &model.a * &x + &model.b * &u + w;
    }
    Ok(StochasticRun {
        states,
        clean_outputs: clean,
        outputs: noisy,
    })
}

/// Parameters of the teleoperation surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub samples: usize,
    pub dt: f64,
    /// Natural frequency of the slave's position loop (Hz).
    pub bandwidth_hz: f64,
    pub damping: f64,
    /// Std of the unmodelled velocity disturbance per sample.
    pub disturbance: f64,
    /// Std of the position sensor noise.
    pub sensor_noise: f64,
    /// Std of the broadband (tremor, encoder) component of the master signal.
    pub excitation: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            samples: 4000,
            dt: 1e-3,
            bandwidth_hz: 6.0,
            damping: 0.7,
            disturbance: 0.02,
            sensor_noise: 1e-3,
            excitation: 0.05,
        }
    }
}

/// Master-slave teleoperation surrogate: three master positions drive a
/// slave whose axes are damped second-order position loops with weak
/// cross-coupling, unmodelled velocity disturbances and sensor noise.
///
/// Inputs are `master_x..z`, outputs `x, y, z`.
pub fn surrogate_trial(seed: u64, spec: &SurrogateSpec) -> Result<TrajectoryDataset> {
    if spec.samples < 2 || !(spec.dt > 0.0) {
        return Err(Error::InvalidParameter("surrogate needs ≥ 2 samples and dt > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, dt) = (spec.samples, spec.dt);

    // master: a few slow sinusoids per axis, a smoothed random walk and broadband tremor
    let mut master = DMatrix::zeros(n, 3);
    for axis in 0..3 {
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.3..1.0),
                    rng.random_range(0.2..2.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let (mut drift, mut vel) = (0.0, 0.0);
        for k in 0..n {
            let t = k as f64 * dt;
            let g: f64 = rng.sample(StandardNormal);
            vel = 0.995 * vel + 0.02 * g;
            drift += vel * dt;
            master[(k, axis)] = waves
                .iter()
                .map(|&(a, f, ph)| a * (std::f64::consts::TAU * f * t + ph).sin())
                .sum::<f64>()
                + drift
                + spec.excitation * rng.sample::<f64, _>(StandardNormal);
        }
    }

    let w = std::f64::consts::TAU * spec.bandwidth_hz;
    let coupling = 0.05;
    let mut pos = DVector::<f64>::from_fn(3, |i, _| master[(0, i)]);
    let mut vel = DVector::<f64>::zeros(3);
    let mut slave = DMatrix::zeros(n, 3);
    for k in 0..n {
        for axis in 0..3 {
            slave[(k, axis)] = pos[axis] + spec.sensor_noise * rng.sample::<f64, _>(StandardNormal);
        }
        let u = master.row(k).transpose();
        let err = &u - &pos;
        let mut acc = DVector::zeros(3);
        for axis in 0..3 {
            let cross = coupling * (err[(axis + 1) % 3] - err[(axis + 2) % 3]);
            acc[axis] = w * w * (err[axis] + cross) - 2.0 * spec.damping * w * vel[axis];
        }
        pos += &vel * dt;
        vel += acc * dt;
        for axis in 0..3 {
            vel[axis] += spec.disturbance * rng.sample::<f64, _>(StandardNormal);
        }
    }

    TrajectoryDataset::new(
        master,
        slave,
        dt,
        vec!["master_x".into(), "master_y".into(), "master_z".into()],
        vec!["x".into(), "y".into(), "z".into()],
    )
}
