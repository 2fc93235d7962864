//! MOESP subspace identification of discrete-time state-space models.
//!
//! The input and output block Hankel matrices are stacked and factored with an
//! LQ decomposition (computed as the QR factorization of the transpose). The
//! output block `R22` of the triangular factor is orthogonal to the input row
//! space, so its dominant left singular vectors span the extended observability
//! matrix. `C` and `A` follow from the observability structure; `B` and `D`
//! from the annihilator of the observability matrix applied to `R21 R11^-1`.

use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{build_hankel, write_matrix_csv, NormalizationParams};
use crate::error::{Error, Result};

/// Default number of block rows.
pub const DEFAULT_BLOCK_ROWS: usize = 20;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    /// Singular values of `R22`, descending.
    pub singular_values: Vec<f64>,
    /// Left singular vectors of `R22`, columns ordered like `singular_values`.
    pub left_vectors: DMatrix<f64>,
    pub r11: DMatrix<f64>,
    pub r21: DMatrix<f64>,
    pub r22: DMatrix<f64>,
    pub block_rows: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    /// Non-fatal diagnostics, e.g. an input block that is not persistently exciting.
    pub warnings: Vec<String>,
}

impl SubspaceDecomposition {
    /// Number of singular values above `1e-12 * ss[0]`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| top > 0.0 && s > RANK_TOL * top)
            .count()
    }

    /// Extended observability matrix estimate `U1[:, :n] * diag(sqrt(ss[:n]))`.
    pub fn observability(&self, order: usize) -> DMatrix<f64> {
        let mut ok = self.left_vectors.columns(0, order).into_owned();
        for (j, mut col) in ok.column_iter_mut().enumerate() {
            col *= self.singular_values[j].sqrt();
        }
        ok
    }

    /// Writes the scree data as `index,value` rows (1-based index).
    pub fn write_scree_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        write_matrix_csv(
            path.as_ref(),
            comment,
            &["index".to_string(), "value".to_string()],
            self.singular_values
                .iter()
                .enumerate()
                .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
        )
    }
}

/// Minimum sample count for [`moesp_decompose`] with `block_rows` and the given channel counts.
pub fn required_samples(block_rows: usize, n_inputs: usize, n_outputs: usize) -> usize {
    let well_posed = 2 * block_rows * n_inputs.max(n_outputs) + 1;
    // the stacked Hankel matrix needs at least as many columns as rows
    let full_lq = block_rows * (n_inputs + n_outputs) + block_rows - 1;
    well_posed.max(full_lq)
}

/// LQ factorization of the stacked input/output Hankel matrices and SVD of `R22`.
///
/// `inputs` and `outputs` are samples × channels and should already be normalized.
pub fn moesp_decompose(
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    block_rows: usize,
) -> Result<SubspaceDecomposition> {
    if inputs.nrows() != outputs.nrows() {
        return Err(Error::Dimension(format!(
            "inputs have {} samples, outputs have {}",
            inputs.nrows(),
            outputs.nrows()
        )));
    }
    if block_rows < 2 {
        return Err(Error::InvalidParameter(format!(
            "block rows must be at least 2, got {block_rows}"
        )));
    }
    let (m_in, m_out) = (inputs.ncols(), outputs.ncols());
    let required = required_samples(block_rows, m_in, m_out);
    if inputs.nrows() < required {
        return Err(Error::InsufficientSamples {
            required,
            available: inputs.nrows(),
        });
    }

    let cols = inputs.nrows() - block_rows + 1;
    let u = build_hankel(inputs, block_rows, cols)?;
    let y = build_hankel(outputs, block_rows, cols)?;
    let pu = block_rows * m_in;
    let py = block_rows * m_out;

    // [U; Y]^T = Q R  =>  [U; Y] = R^T Q^T, with R^T lower triangular.
    let mut stacked_t = DMatrix::zeros(cols, pu + py);
    stacked_t.columns_mut(0, pu).copy_from(&u.data.transpose());
    stacked_t.columns_mut(pu, py).copy_from(&y.data.transpose());
    let lower = stacked_t.qr().r().transpose();

    let r11 = lower.view((0, 0), (pu, pu)).into_owned();
    let r21 = lower.view((pu, 0), (py, pu)).into_owned();
    let r22 = lower.view((pu, pu), (py, py)).into_owned();

    let mut warnings = Vec::new();
    let diag = r11.diagonal().map(f64::abs);
    let (dmin, dmax) = (diag.min(), diag.max());
    if dmax == 0.0 || dmin < 1e-10 * dmax {
        warnings.push(format!(
            "input block is rank deficient (|R11| diagonal ratio {:.3e}); inputs are not persistently exciting",
            if dmax == 0.0 { 0.0 } else { dmin / dmax }
        ));
    }

    let svd = r22.clone().svd(true, false);
    let left_vectors = svd.u.expect("left singular vectors requested");
    Ok(SubspaceDecomposition {
        singular_values: svd.singular_values.iter().copied().collect(),
        left_vectors,
        r11,
        r21,
        r22,
        block_rows,
        n_inputs: m_in,
        n_outputs: m_out,
        warnings,
    })
}

/// How to pick the model order from the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OrderCriterion {
    /// Smallest `n` whose cumulative singular-value share reaches the fraction.
    Energy(f64),
    Fixed(usize),
    /// Count of singular values above `ratio * ss[0]`.
    ThresholdRatio(f64),
    /// Largest drop between consecutive singular values on a log scale.
    Knee,
}

impl Default for OrderCriterion {
    fn default() -> Self {
        OrderCriterion::Energy(0.85)
    }
}

/// Cumulative energy share `sum(ss[..n]) / sum(ss)` for `n = 1..=len`.
pub fn energy_profile(ss: &[f64]) -> Vec<f64> {
    let total: f64 = ss.iter().sum();
    let mut acc = 0.0;
    ss.iter()
        .map(|s| {
            acc += s;
            (acc / total).min(1.0)
        })
        .collect()
}

pub fn select_order(ss: &[f64], criterion: OrderCriterion) -> Result<usize> {
    if !ss.iter().any(|&s| s > 0.0) {
        return Err(Error::Degenerate(
            "degenerate data: all singular values are zero".into(),
        ));
    }
    let positive = ss.iter().filter(|&&s| s > RANK_TOL * ss[0]).count().max(1);
    let n = match criterion {
        OrderCriterion::Energy(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "energy fraction must lie in (0, 1], got {frac}"
                )));
            }
            energy_profile(ss)
                .iter()
                .position(|&e| e >= frac)
                .map_or(ss.len(), |i| i + 1)
        }
        OrderCriterion::Fixed(n) => {
            if n == 0 || n > ss.len() {
                return Err(Error::InvalidParameter(format!(
                    "fixed order {n} outside 1..={}",
                    ss.len()
                )));
            }
            n
        }
        OrderCriterion::ThresholdRatio(ratio) => {
            ss.iter().filter(|&&s| s > ratio * ss[0]).count()
        }
        OrderCriterion::Knee => {
            if positive < 2 {
                1
            } else {
                (0..positive - 1)
                    .map(|i| (i, (ss[i] / ss[i + 1]).ln()))
                    .fold((0, f64::NEG_INFINITY), |best, (i, g)| if g > best.1 { (i, g) } else { best })
                    .0
                    + 1
            }
        }
    };
    Ok(n.max(1))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelFlags {
    /// Spectral radius of `A` is at least 1.
    pub unstable: bool,
    /// Condition number of the observability shift equation, when identified.
    pub shift_condition: Option<f64>,
    /// Condition number of the input factor `R11`, when identified.
    pub input_condition: Option<f64>,
    pub warnings: Vec<String>,
}

/// Discrete-time model `x[k+1] = A x[k] + B u[k]`, `y[k] = C x[k] + D u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
    pub norm_params: Option<NormalizationParams>,
    pub spectral_radius: f64,
    pub flags: ModelFlags,
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {:?}", a.shape())));
        }
        if b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "inconsistent shapes A{:?} B{:?} C{:?} D{:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if [&a, &b, &c, &d].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::Degenerate("model has non-finite entries".into()));
        }
        let spectral_radius = spectral_radius(&a);
        Ok(Self {
            a,
            b,
            c,
            d,
            dt,
            norm_params: None,
            spectral_radius,
            flags: ModelFlags {
                unstable: spectral_radius >= 1.0,
                ..Default::default()
            },
        })
    }

    pub fn with_normalization(mut self, params: NormalizationParams) -> Self {
        self.norm_params = Some(params);
        self
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    /// `C A^k B`.
    pub fn markov(&self, k: usize) -> DMatrix<f64> {
        let mut m = self.b.clone();
        for _ in 0..k {
            m = &self.a * m;
        }
        &self.c * m
    }

    /// `[D, CB, CAB, ..]`, `count` terms.
    pub fn impulse_response(&self, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(self.d.clone());
        let mut ak_b = self.b.clone();
        for _ in 1..count {
            out.push(&self.c * &ak_b);
            ak_b = &self.a * ak_b;
        }
        out
    }

    /// Similarity transform `(T A T^-1, T B, C T^-1, D)`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("similarity transform is not invertible".into()))?;
        let mut m = Self::new(
            t * &self.a * &t_inv,
            t * &self.b,
            &self.c * &t_inv,
            self.d.clone(),
            self.dt,
        )?;
        m.norm_params = self.norm_params.clone();
        m.flags.warnings = self.flags.warnings.clone();
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.try_into()
    }
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Serialized model layout. Matrices are arrays of rows.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    order: usize,
    dt: f64,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    norm_params: Option<NormalizationParams>,
    spectral_radius: f64,
    flags: ModelFlags,
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

impl From<&StateSpaceModel> for ModelDocument {
    fn from(m: &StateSpaceModel) -> Self {
        Self {
            order: m.order(),
            dt: m.dt,
            a: to_rows(&m.a),
            b: to_rows(&m.b),
            c: to_rows(&m.c),
            d: to_rows(&m.d),
            norm_params: m.norm_params.clone(),
            spectral_radius: m.spectral_radius,
            flags: m.flags.clone(),
        }
    }
}

impl TryFrom<ModelDocument> for StateSpaceModel {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        let n = doc.order;
        let m_in = doc.b.first().map_or(0, Vec::len);
        let m_out = doc.c.len();
        if doc.a.len() != n || doc.b.len() != n || doc.d.len() != m_out {
            return Err(Error::Dimension("model document row counts disagree with order".into()));
        }
        let mut model = StateSpaceModel::new(
            from_rows(&doc.a, n)?,
            from_rows(&doc.b, m_in)?,
            from_rows(&doc.c, n)?,
            from_rows(&doc.d, m_in)?,
            doc.dt,
        )?;
        model.norm_params = doc.norm_params;
        model.flags = doc.flags;
        model.flags.unstable = model.spectral_radius >= 1.0;
        Ok(model)
    }
}

/// Realizes `(A, B, C, D)` of order `order` from a decomposition.
pub fn realize(decomp: &SubspaceDecomposition, order: usize, dt: f64) -> Result<StateSpaceModel> {
    let d = decomp.block_rows;
    let (m_in, m_out) = (decomp.n_inputs, decomp.n_outputs);
    let py = d * m_out;
    let rank = decomp.numerical_rank();
    if order == 0 || order > rank {
        return Err(Error::InvalidParameter(format!(
            "order {order} outside 1..={rank} (positive singular values)"
        )));
    }
    if order >= py || (d - 1) * m_out < order {
        return Err(Error::InvalidParameter(format!(
            "order {order} too large for {d} block rows of {m_out} outputs"
        )));
    }

    let ok = decomp.observability(order);
    let c = ok.rows(0, m_out).into_owned();

    // Shift equation: Ok[..(d-1)] A = Ok[1..].
    let upper = ok.rows(0, py - m_out).into_owned();
    let lower = ok.rows(m_out, py - m_out).into_owned();
    let shift_svd = upper.svd(true, true);
    let (smax, smin) = (
        shift_svd.singular_values.max(),
        shift_svd.singular_values.min(),
    );
    if smin <= f64::EPSILON * smax * (py as f64) {
        return Err(Error::Singular(format!(
            "observability shift equation is rank deficient (condition {:.3e})",
            smax / smin
        )));
    }
    let shift_condition = smax / smin;
    let a = shift_svd
        .solve(&lower, 0.0)
        .map_err(|e| Error::Singular(e.to_string()))?;

    // L1 T = L1 R21 R11^-1, with L1 spanning the complement of the observability columns.
    let input_condition = triangular_condition(&decomp.r11);
    if !input_condition.is_finite() || input_condition > 1e12 {
        return Err(Error::Singular(format!(
            "R11 is singular (condition {input_condition:.3e}); inputs are not sufficiently exciting"
        )));
    }
    let l1 = decomp.left_vectors.columns(order, py - order).transpose();
    let l1_r21 = &l1 * &decomp.r21;
    let m1 = decomp
        .r11
        .transpose()
        .solve_upper_triangular(&l1_r21.transpose())
        .ok_or_else(|| Error::Singular("R11 is singular".into()))?
        .transpose();

    let rows_per_block = py - order;
    let mut lhs = DMatrix::zeros(d * rows_per_block, m_out + order);
    let mut rhs = DMatrix::zeros(d * rows_per_block, m_in);
    for i in 0..d {
        let r0 = i * rows_per_block;
        lhs.view_mut((r0, 0), (rows_per_block, m_out))
            .copy_from(&l1.columns(i * m_out, m_out));
        let tail = d - 1 - i;
        if tail > 0 {
            let prod = l1.columns((i + 1) * m_out, tail * m_out) * ok.rows(0, tail * m_out);
            lhs.view_mut((r0, m_out), (rows_per_block, order)).copy_from(&prod);
        }
        rhs.view_mut((r0, 0), (rows_per_block, m_in))
            .copy_from(&m1.columns(i * m_in, m_in));
    }
    let db = lhs
        .svd(true, true)
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Singular(e.to_string()))?;
    let dmat = db.rows(0, m_out).into_owned();
    let b = db.rows(m_out, order).into_owned();

    let mut model = StateSpaceModel::new(a, b, c, dmat, dt)?;
    model.flags.shift_condition = Some(shift_condition);
    model.flags.input_condition = Some(input_condition);
    model.flags.warnings = decomp.warnings.clone();
    if model.flags.unstable {
        log::warn!("identified model is unstable (spectral radius {:.4})", model.spectral_radius);
    }
    Ok(model)
}

fn triangular_condition(r: &DMatrix<f64>) -> f64 {
    let s = r.singular_values();
    let (smax, smin) = (s.max(), s.min());
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Result of decomposition, order selection and realization.
#[derive(Debug, Clone)]
pub struct Identification {
    pub decomposition: SubspaceDecomposition,
    pub order: usize,
    /// Cumulative singular-value share at the chosen order.
    pub energy_ratio: f64,
    pub model: StateSpaceModel,
}

/// Full identification pipeline on normalized data.
pub fn identify(
    inputs: &DMatrix<f64>,
    outputs: &DMatrix<f64>,
    block_rows: usize,
    criterion: OrderCriterion,
    dt: f64,
) -> Result<Identification> {
    let decomposition = moesp_decompose(inputs, outputs, block_rows)?;
    let chosen = select_order(&decomposition.singular_values, criterion)?;
    // realizable order is bounded by the shift equation and the numerical rank
    let cap = decomposition
        .numerical_rank()
        .min((block_rows - 1) * outputs.ncols());
    let order = chosen.min(cap).max(1);
    if order != chosen {
        log::warn!("order {chosen} capped to {order}");
    }
    let model = realize(&decomposition, order, dt)?;
    let energy_ratio = energy_profile(&decomposition.singular_values)[order - 1];
    Ok(Identification {
        decomposition,
        order,
        energy_ratio,
        model,
    })
}

/// Noise-free response from initial state `x0`; `inputs` is samples × channels.
pub fn simulate(
    model: &StateSpaceModel,
    inputs: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if inputs.ncols() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "inputs have {} channels, model expects {}",
            inputs.ncols(),
            model.n_inputs()
        )));
    }
    if x0.len() != model.order() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, model order is {}",
            x0.len(),
            model.order()
        )));
    }
    let mut out = DMatrix::zeros(inputs.nrows(), model.n_outputs());
    let mut x = x0.clone();
    for k in 0..inputs.nrows() {
        let u = inputs.row(k).transpose();
        let y = &model.c * &x + &model.d * &u;
        out.row_mut(k).copy_from(&y.transpose());
        x = &model.a * &x + &model.b * &u;
    }
    Ok(out)
}
