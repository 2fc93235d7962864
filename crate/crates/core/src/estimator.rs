//! Kalman filtering of the impaired measurement stream.
//!
//! The filter is driven by the master-side inputs through the identified model
//! and corrected with whatever the channel delivered. The measurement update
//! processes the rows of `C` one at a time as scalar updates using the diagonal
//! of `R`; a joint update over the full `R` is available as [`UpdateMode::Batch`].
//! Covariances are propagated in Joseph form, symmetrized, and clipped to the
//! positive semidefinite cone when round-off pushes an eigenvalue below zero.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::write_matrix_csv;
use crate::error::{Error, Result};
use crate::netsim::NetworkScenario;
use crate::sysid::{from_rows, to_rows, StateSpaceModel};

pub const DEFAULT_EPS_Q: f64 = 1e-4;
pub const DEFAULT_EPS_R: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseProvenance {
    #[default]
    Initial,
    Empirical,
}

/// Process (`q`, n × n) and measurement (`r`, m × m) noise covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub provenance: NoiseProvenance,
    pub eps_q: Option<f64>,
    pub eps_r: Option<f64>,
    pub iterations: usize,
}

impl NoiseModel {
    /// Symmetrizes both matrices and clips negative eigenvalues to zero.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, provenance: NoiseProvenance) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !m.is_square() {
                return Err(Error::Dimension(format!("{name} must be square, got {:?}", m.shape())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Degenerate(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self {
            q: psd_clip(symmetrize(q)),
            r: psd_clip(symmetrize(r)),
            provenance,
            eps_q: None,
            eps_r: None,
            iterations: 0,
        })
    }

    /// `eps_q * I` and `eps_r * I`.
    pub fn initial(order: usize, outputs: usize, eps_q: f64, eps_r: f64) -> Result<Self> {
        if !(eps_q >= 0.0 && eps_r >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise scales must be non-negative, got eps_q={eps_q}, eps_r={eps_r}"
            )));
        }
        let mut m = Self::new(
            DMatrix::identity(order, order) * eps_q,
            DMatrix::identity(outputs, outputs) * eps_r,
            NoiseProvenance::Initial,
        )?;
        m.eps_q = Some(eps_q);
        m.eps_r = Some(eps_r);
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NoiseDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: NoiseDocument = serde_json::from_str(s)?;
        let mut m = Self::new(
            from_rows(&doc.q, doc.q.len())?,
            from_rows(&doc.r, doc.r.len())?,
            doc.provenance,
        )?;
        m.eps_q = doc.eps_q;
        m.eps_r = doc.eps_r;
        m.iterations = doc.iterations;
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct NoiseDocument {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    provenance: NoiseProvenance,
    eps_q: Option<f64>,
    eps_r: Option<f64>,
    iterations: usize,
}

impl From<&NoiseModel> for NoiseDocument {
    fn from(m: &NoiseModel) -> Self {
        Self {
            q: to_rows(&m.q),
            r: to_rows(&m.r),
            provenance: m.provenance,
            eps_q: m.eps_q,
            eps_r: m.eps_r,
            iterations: m.iterations,
        }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Projects a symmetric matrix onto the PSD cone when it is not already positive definite.
pub(crate) fn psd_clip(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.clone().cholesky().is_some() {
        return m;
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return m;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(v * DMatrix::from_diagonal(&clipped) * v.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: usize,
}

impl FilterState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != x_hat.len() || !p.is_square() {
            return Err(Error::Dimension(format!(
                "covariance {:?} does not match state length {}",
                p.shape(),
                x_hat.len()
            )));
        }
        Ok(Self { x_hat, p, k: 0 })
    }

    /// `x = 0`, `P = I`.
    pub fn default_for(order: usize) -> Self {
        Self {
            x_hat: DVector::zeros(order),
            p: DMatrix::identity(order, order),
            k: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// Scalar updates row by row with the diagonal of `R`.
    #[default]
    Sequential,
    /// Joint vector update with the full `R`.
    Batch,
}

fn check_dims(state: &FilterState, model: &StateSpaceModel, noise: &NoiseModel) -> Result<()> {
    let n = model.order();
    if state.x_hat.len() != n || state.p.nrows() != n {
        return Err(Error::Dimension(format!(
            "filter state has order {}, model has {n}",
            state.x_hat.len()
        )));
    }
    if noise.q.nrows() != n || noise.r.nrows() != model.n_outputs() {
        return Err(Error::Dimension(format!(
            "noise model Q{:?} R{:?} does not match order {n} and {} outputs",
            noise.q.shape(),
            noise.r.shape(),
            model.n_outputs()
        )));
    }
    Ok(())
}

/// Time update: `x = A x + B u`, `P = A P A' + Q`.
pub fn kf_predict(
    state: &FilterState,
    u: &DVector<f64>,
    model: &StateSpaceModel,
    noise: &NoiseModel,
) -> Result<FilterState> {
    check_dims(state, model, noise)?;
    if u.len() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "input has length {}, model expects {}",
            u.len(),
            model.n_inputs()
        )));
    }
    Ok(FilterState {
        x_hat: &model.a * &state.x_hat + &model.b * u,
        p: symmetrize(&model.a * &state.p * model.a.transpose() + &noise.q),
        k: state.k + 1,
    })
}

/// Measurement update against `z = C x` (any feedthrough already removed from `z`).
pub fn kf_update(
    prior: &FilterState,
    z: &DVector<f64>,
    model: &StateSpaceModel,
    noise: &NoiseModel,
    mode: UpdateMode,
) -> Result<FilterState> {
    check_dims(prior, model, noise)?;
    if z.len() != model.n_outputs() {
        return Err(Error::Dimension(format!(
            "measurement has length {}, model has {} outputs",
            z.len(),
            model.n_outputs()
        )));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: prior.k, column: i });
    }
    let (x_hat, p) = match mode {
        UpdateMode::Sequential => sequential_update(&prior.x_hat, &prior.p, z, &model.c, &noise.r)?,
        UpdateMode::Batch => batch_update(&prior.x_hat, &prior.p, z, &model.c, &noise.r)?,
    };
    Ok(FilterState {
        x_hat,
        p: psd_clip(symmetrize(p)),
        k: prior.k,
    })
}

fn sequential_update(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    z: &DVector<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.len();
    let mut x = x.clone();
    let mut p = p.clone();
    for row in 0..c.nrows() {
        let h = c.row(row);
        let ph = &p * h.transpose();
        let variance = (h * &ph)[(0, 0)] + r[(row, row)];
        if !(variance > 0.0) {
            return Err(Error::DegenerateInnovation { row, variance });
        }
        let gain = ph / variance;
        let innovation = z[row] - (h * &x)[(0, 0)];
        x += &gain * innovation;
        let ikh = DMatrix::identity(n, n) - &gain * h;
        p = &ikh * &p * ikh.transpose() + &gain * gain.transpose() * r[(row, row)];
    }
    Ok((x, p))
}

fn batch_update(
    x: &DVector<f64>,
    p: &DMatrix<f64>,
    z: &DVector<f64>,
    c: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = x.len();
    let s = symmetrize(c * p * c.transpose() + r);
    let pct = p * c.transpose();
    // K = P C' S^-1, i.e. S K' = C P
    let gain = match s.clone().cholesky() {
        Some(ch) => ch.solve(&pct.transpose()).transpose(),
        None => {
            let variance = s.diagonal().min();
            return Err(Error::DegenerateInnovation { row: 0, variance });
        }
    };
    let innovation = z - c * x;
    let x = x + &gain * innovation;
    let ikc = DMatrix::identity(n, n) - &gain * c;
    let p = &ikc * p * ikc.transpose() + &gain * r * gain.transpose();
    Ok((x, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub mode: UpdateMode,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            mode: UpdateMode::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRun {
    /// `C x + D u` after each update, samples × outputs.
    pub estimates: DMatrix<f64>,
    /// Measurement minus predicted measurement, samples × outputs.
    pub innovations: DMatrix<f64>,
    /// Posterior states, samples × order.
    pub states: DMatrix<f64>,
    pub measurements: DMatrix<f64>,
    pub scenario: Option<NetworkScenario>,
}

impl EstimationRun {
    pub fn len(&self) -> usize {
        self.estimates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with columns `k, z_obs..., y_est..., innovation...`.
    pub fn write_csv(&self, path: impl AsRef<Path>, names: &[String], comment: Option<&str>) -> Result<()> {
        let mut header = vec!["k".to_string()];
        for prefix in ["z_obs", "y_est", "innovation"] {
            header.extend(names.iter().map(|n| format!("{prefix}_{n}")));
        }
        write_matrix_csv(
            path.as_ref(),
            comment,
            &header,
            (0..self.len()).map(|k| {
                let mut r = vec![(k + 1).to_string()];
                for m in [&self.measurements, &self.estimates, &self.innovations] {
                    r.extend(m.row(k).iter().map(|v| v.to_string()));
                }
                r
            }),
        )
    }
}

/// Runs predict/update over all samples.
///
/// `inputs` and `measurements` are samples × channels. Sample 0 is not
/// updated; its estimate is the output of the initial state.
pub fn run_filter(
    model: &StateSpaceModel,
    noise: &NoiseModel,
    inputs: &DMatrix<f64>,
    measurements: &DMatrix<f64>,
    initial: &FilterState,
    options: FilterOptions,
) -> Result<EstimationRun> {
    let n_samples = inputs.nrows();
    if measurements.nrows() != n_samples {
        return Err(Error::Dimension(format!(
            "inputs have {n_samples} samples, measurements have {}",
            measurements.nrows()
        )));
    }
    if inputs.ncols() != model.n_inputs() || measurements.ncols() != model.n_outputs() {
        return Err(Error::Dimension(format!(
            "data has {} inputs / {} outputs, model has {} / {}",
            inputs.ncols(),
            measurements.ncols(),
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    if n_samples == 0 {
        return Err(Error::TooFewRows { required: 1, found: 0 });
    }
    check_dims(initial, model, noise)?;

    let m_out = model.n_outputs();
    let mut estimates = DMatrix::zeros(n_samples, m_out);
    let mut innovations = DMatrix::zeros(n_samples, m_out);
    let mut states = DMatrix::zeros(n_samples, model.order());

    let mut state = initial.clone();
    let u0 = inputs.row(0).transpose();
    let y0 = &model.c * &state.x_hat + &model.d * &u0;
    estimates.row_mut(0).copy_from(&y0.transpose());
    innovations
        .row_mut(0)
        .copy_from(&(measurements.row(0) - y0.transpose()));
    states.row_mut(0).copy_from(&state.x_hat.transpose());

    for k in 1..n_samples {
        let u_prev = inputs.row(k - 1).transpose();
        let u = inputs.row(k).transpose();
        let prior = kf_predict(&state, &u_prev, model, noise)?;
        let feedthrough = &model.d * &u;
        let z = measurements.row(k).transpose() - &feedthrough;
        let innovation = &z - &model.c * &prior.x_hat;
        state = kf_update(&prior, &z, model, noise, options.mode).map_err(|e| Error::Filter {
            sample: k,
            source: Box::new(e),
        })?;
        let y = &model.c * &state.x_hat + feedthrough;
        estimates.row_mut(k).copy_from(&y.transpose());
        innovations.row_mut(k).copy_from(&innovation.transpose());
        states.row_mut(k).copy_from(&state.x_hat.transpose());
    }
    Ok(EstimationRun {
        estimates,
        innovations,
        states,
        measurements: measurements.clone(),
        scenario: None,
    })
}

/// Which input sample enters the process residual `x(k) - A x(k-1) - B u(.)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResidualInput {
    /// `u(k)`, as the residual is usually written for this bootstrap.
    #[default]
    Current,
    /// `u(k-1)`, consistent with the state equation.
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub eps_q: f64,
    pub eps_r: f64,
    pub iterations: usize,
    pub residual_input: ResidualInput,
    /// Leading samples excluded from the residual sums.
    pub skip: usize,
    pub filter: FilterOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            eps_q: DEFAULT_EPS_Q,
            eps_r: DEFAULT_EPS_R,
            iterations: 1,
            residual_input: ResidualInput::Current,
            skip: 0,
            filter: FilterOptions::default(),
        }
    }
}

/// Empirical Q and R from filter residuals.
///
/// Starts from `eps_q * I`, `eps_r * I`, runs the filter from `x = 0, P = I`, and
/// replaces the covariances with `R = 1/N sum r_y r_y'` and
/// `Q = 1/(N-1) sum r_x r_x'`, where `r_y = y - y_hat` and
/// `r_x(k) = x_hat(k) - A x_hat(k-1) - B u`. Repeats `iterations` times.
pub fn estimate_noise_empirical(
    model: &StateSpaceModel,
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    options: &BootstrapOptions,
) -> Result<NoiseModel> {
    if !(options.eps_q > 0.0 && options.eps_r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eps_q and eps_r must be positive, got {} and {}",
            options.eps_q, options.eps_r
        )));
    }
    if options.iterations == 0 {
        return Err(Error::InvalidParameter("at least one bootstrap iteration is required".into()));
    }
    let total = outputs.nrows();
    if total < options.skip + 2 {
        return Err(Error::TooFewRows {
            required: options.skip + 2,
            found: total,
        });
    }

    let mut noise = NoiseModel::initial(model.order(), model.n_outputs(), options.eps_q, options.eps_r)?;
    let initial = FilterState::default_for(model.order());
    for _ in 0..options.iterations {
        let run = run_filter(model, &noise, inputs, outputs, &initial, options.filter)?;
        let residual_y = outputs - &run.estimates;
        let n = (total - options.skip) as f64;
        let mut r = DMatrix::zeros(model.n_outputs(), model.n_outputs());
        for k in options.skip..total {
            let e = residual_y.row(k);
            r += e.transpose() * e;
        }
        r /= n;

        let mut q = DMatrix::zeros(model.order(), model.order());
        let first = options.skip.max(1);
        for k in first..total {
            let u = match options.residual_input {
                ResidualInput::Current => inputs.row(k),
                ResidualInput::Previous => inputs.row(k - 1),
            };
            let e = run.states.row(k).transpose()
                - &model.a * run.states.row(k - 1).transpose()
                - &model.b * u.transpose();
            q += &e * e.transpose();
        }
        q /= (total - first) as f64;

        let mut next = NoiseModel::new(q, r, NoiseProvenance::Empirical)?;
        next.eps_q = Some(options.eps_q);
        next.eps_r = Some(options.eps_r);
        next.iterations = noise.iterations + 1;
        noise = next;
    }
    Ok(noise)
}
