//! Trajectory datasets: CSV loading, min-max normalization and block Hankel construction.
//!
//! A dataset pairs an input (master-side) channel matrix with an output
//! (slave-side) channel matrix. Rows are samples, columns are channels.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default kinematic sample period (30 Hz).
pub const DEFAULT_DT: f64 = 1.0 / 30.0;

const INPUT_PREFIX: &str = "u:";
const OUTPUT_PREFIX: &str = "y:";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub inputs: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
    pub dt: f64,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl TrajectoryDataset {
    /// Builds a dataset, checking the row count, the sample period and finiteness.
    pub fn new(
        inputs: DMatrix<f64>,
        outputs: DMatrix<f64>,
        dt: f64,
        input_names: Vec<String>,
        output_names: Vec<String>,
    ) -> Result<Self> {
        if inputs.nrows() != outputs.nrows() {
            return Err(Error::Dimension(format!(
                "inputs have {} rows, outputs have {}",
                inputs.nrows(),
                outputs.nrows()
            )));
        }
        if inputs.nrows() < 2 {
            return Err(Error::TooFewRows {
                required: 2,
                found: inputs.nrows(),
            });
        }
        if inputs.ncols() == 0 || outputs.ncols() == 0 {
            return Err(Error::Header(
                "at least one input and one output channel are required".into(),
            ));
        }
        if input_names.len() != inputs.ncols() || output_names.len() != outputs.ncols() {
            return Err(Error::Header("channel name count differs from column count".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("sample period must be > 0, got {dt}")));
        }
        check_finite(&inputs, 0)?;
        check_finite(&outputs, inputs.ncols())?;
        Ok(Self {
            inputs,
            outputs,
            dt,
            input_names,
            output_names,
        })
    }

    /// Builds a dataset with generated channel names `u0..`, `y0..`.
    pub fn from_matrices(inputs: DMatrix<f64>, outputs: DMatrix<f64>, dt: f64) -> Result<Self> {
        let input_names = (0..inputs.ncols()).map(|i| format!("u{i}")).collect();
        let output_names = (0..outputs.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(inputs, outputs, dt, input_names, output_names)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.ncols()
    }

    /// Contiguous sub-range of samples `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {}) exceeds dataset length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.inputs.rows(start, len).into_owned(),
            self.outputs.rows(start, len).into_owned(),
            self.dt,
            self.input_names.clone(),
            self.output_names.clone(),
        )
    }

    /// Splits into identification (first `fraction`) and validation parts.
    pub fn split(&self, fraction: f64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let head = ((self.len() as f64) * fraction).round() as usize;
        let head = head.clamp(2, self.len().saturating_sub(2));
        Ok((self.window(0, head)?, self.window(head, self.len() - head)?))
    }
}

fn check_finite(m: &DMatrix<f64>, column_offset: usize) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite {
                    row: r,
                    column: c + column_offset,
                });
            }
        }
    }
    Ok(())
}

/// Which columns of a role-prefixed CSV file to load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvLayout {
    /// Sample period used when the file has no `t` column.
    pub dt: Option<f64>,
    /// Input channel names (without the `u:` prefix). `None` loads every input column.
    pub inputs: Option<Vec<String>>,
    /// Output channel names (without the `y:` prefix). `None` loads every output column.
    pub outputs: Option<Vec<String>>,
}

/// Loads a comma-delimited dataset with header `t,u:<name>...,y:<name>...`.
///
/// The `t` column is optional. When present the sample period is `t[1] - t[0]`
/// and the remaining steps must agree with it to 1e-6 relative; otherwise
/// `layout.dt` (or 1/30 s) is used. Lines starting with `#` are ignored.
pub fn load_dataset(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<TrajectoryDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header = reader.headers()?.clone();

    let mut time_col = None;
    let mut input_cols = Vec::new();
    let mut output_cols = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if name == "t" {
            if time_col.replace(i).is_some() {
                return Err(Error::Header("duplicate t column".into()));
            }
        } else if let Some(n) = name.strip_prefix(INPUT_PREFIX) {
            input_cols.push((i, n.to_string()));
        } else if let Some(n) = name.strip_prefix(OUTPUT_PREFIX) {
            output_cols.push((i, n.to_string()));
        } else {
            return Err(Error::Header(format!(
                "column {i} ({name:?}) has no role prefix (expected `t`, `u:` or `y:`)"
            )));
        }
    }
    let input_cols = select_columns(input_cols, layout.inputs.as_deref(), INPUT_PREFIX)?;
    let output_cols = select_columns(output_cols, layout.outputs.as_deref(), OUTPUT_PREFIX)?;
    if input_cols.is_empty() || output_cols.is_empty() {
        return Err(Error::Header(
            "at least one `u:` and one `y:` column are required".into(),
        ));
    }

    let mut times = Vec::new();
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Header(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        let field = |col: usize| -> Result<f64> {
            let v: f64 = record[col].parse().map_err(|_| {
                Error::Header(format!("row {row}, column {col}: cannot parse {:?}", &record[col]))
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite { row, column: col })
            }
        };
        if let Some(tc) = time_col {
            times.push(field(tc)?);
        }
        for (c, _) in &input_cols {
            u.push(field(*c)?);
        }
        for (c, _) in &output_cols {
            y.push(field(*c)?);
        }
    }
    let n = u.len() / input_cols.len();
    if n < 2 {
        return Err(Error::TooFewRows {
            required: 2,
            found: n,
        });
    }

    let dt = match time_col {
        Some(_) => uniform_step(&times)?,
        None => layout.dt.unwrap_or(DEFAULT_DT),
    };
    TrajectoryDataset::new(
        DMatrix::from_row_slice(n, input_cols.len(), &u),
        DMatrix::from_row_slice(n, output_cols.len(), &y),
        dt,
        input_cols.into_iter().map(|(_, n)| n).collect(),
        output_cols.into_iter().map(|(_, n)| n).collect(),
    )
}

fn select_columns(
    available: Vec<(usize, String)>,
    wanted: Option<&[String]>,
    prefix: &str,
) -> Result<Vec<(usize, String)>> {
    match wanted {
        None => Ok(available),
        Some(names) => names
            .iter()
            .map(|name| {
                available
                    .iter()
                    .find(|(_, n)| n == name)
                    .cloned()
                    .ok_or_else(|| Error::Header(format!("column `{prefix}{name}` not in header")))
            })
            .collect(),
    }
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time column must increase, first step is {dt}"
        )));
    }
    for (k, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if ((step - dt) / dt).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "non-uniform sampling at row {}: step {step} vs {dt}",
                k + 1
            )));
        }
    }
    Ok(dt)
}

/// Writes a dataset in the layout read by [`load_dataset`], with a `t` column.
///
/// Values use the shortest round-trip representation, so reloading is bit-exact.
pub fn write_dataset(path: impl AsRef<Path>, ds: &TrajectoryDataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["t".to_string()];
    header.extend(ds.input_names.iter().map(|n| format!("{INPUT_PREFIX}{n}")));
    header.extend(ds.output_names.iter().map(|n| format!("{OUTPUT_PREFIX}{n}")));
    w.write_record(&header)?;
    for k in 0..ds.len() {
        let mut rec = vec![(k as f64 * ds.dt).to_string()];
        rec.extend(ds.inputs.row(k).iter().map(|v| v.to_string()));
        rec.extend(ds.outputs.row(k).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Channel selection for raw JIGSAWS kinematics files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JigsawsMapping {
    /// Master Cartesian position of one arm as inputs, slave position of the same arm as outputs.
    #[default]
    LeftPositions,
    RightPositions,
    /// All 38 master features as inputs, all 38 slave features as outputs.
    Full,
}

/// Loads a raw JIGSAWS kinematics file: 76 whitespace-separated columns per line,
/// master (left, right) then slave (left, right), 19 features per manipulator.
pub fn load_jigsaws_kinematics(
    path: impl AsRef<Path>,
    mapping: JigsawsMapping,
    dt: f64,
) -> Result<TrajectoryDataset> {
    const FEATURES: [&str; 19] = [
        "x", "y", "z", "r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33", "vx",
        "vy", "vz", "wx", "wy", "wz", "grip",
    ];
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split_whitespace()
            .enumerate()
            .map(|(col, s)| {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Header(format!("row {row}, column {col}: bad number {s:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite { row, column: col })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 76 {
            return Err(Error::Header(format!(
                "row {row} has {} columns, JIGSAWS kinematics have 76",
                vals.len()
            )));
        }
        rows.push(vals);
    }
    let (u_cols, y_cols): (Vec<usize>, Vec<usize>) = match mapping {
        JigsawsMapping::LeftPositions => ((0..3).collect(), (38..41).collect()),
        JigsawsMapping::RightPositions => ((19..22).collect(), (57..60).collect()),
        JigsawsMapping::Full => ((0..38).collect(), (38..76).collect()),
    };
    let name = |col: usize| {
        let side = if (col % 38) < 19 { "l" } else { "r" };
        let arm = if col < 38 { "mtm" } else { "psm" };
        format!("{arm}_{side}_{}", FEATURES[col % 19])
    };
    let n = rows.len();
    let pick = |cols: &[usize]| DMatrix::from_fn(n, cols.len(), |r, c| rows[r][cols[c]]);
    TrajectoryDataset::new(
        pick(&u_cols),
        pick(&y_cols),
        dt,
        u_cols.iter().map(|&c| name(c)).collect(),
        y_cols.iter().map(|&c| name(c)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub name: String,
    pub role: ChannelRole,
    pub min: f64,
    pub max: f64,
    /// `max == min`; such channels normalize to 0.
    pub constant: bool,
}

impl ChannelScale {
    fn fit(name: &str, role: ChannelRole, values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self {
            name: name.to_string(),
            role,
            min,
            max,
            constant: max == min,
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

/// Per-channel min/max retained for the inverse transform. Inputs come first, then outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub channels: Vec<ChannelScale>,
}

impl NormalizationParams {
    /// Fits min/max on `ds`.
    pub fn fit(ds: &TrajectoryDataset) -> Self {
        let mut channels = Vec::with_capacity(ds.n_inputs() + ds.n_outputs());
        for (c, name) in ds.input_names.iter().enumerate() {
            channels.push(ChannelScale::fit(
                name,
                ChannelRole::Input,
                ds.inputs.column(c).iter().copied(),
            ));
        }
        for (c, name) in ds.output_names.iter().enumerate() {
            channels.push(ChannelScale::fit(
                name,
                ChannelRole::Output,
                ds.outputs.column(c).iter().copied(),
            ));
        }
        Self { channels }
    }

    pub fn role(&self, role: ChannelRole) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .filter(|c| c.role == role)
                .cloned()
                .collect(),
        }
    }

    pub fn inputs(&self) -> Self {
        self.role(ChannelRole::Input)
    }

    pub fn outputs(&self) -> Self {
        self.role(ChannelRole::Output)
    }

    pub fn constant_channels(&self) -> impl Iterator<Item = &ChannelScale> {
        self.channels.iter().filter(|c| c.constant)
    }

    /// Scales `ds` with these parameters (which may come from another split).
    pub fn apply(&self, ds: &TrajectoryDataset) -> Result<TrajectoryDataset> {
        let inputs = self.inputs();
        let outputs = self.outputs();
        check_names(&inputs, &ds.input_names)?;
        check_names(&outputs, &ds.output_names)?;
        TrajectoryDataset::new(
            scale(&ds.inputs, &inputs, ChannelScale::forward),
            scale(&ds.outputs, &outputs, ChannelScale::forward),
            ds.dt,
            ds.input_names.clone(),
            ds.output_names.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_names(params: &NormalizationParams, names: &[String]) -> Result<()> {
    let expected: Vec<&str> = params.channels.iter().map(|c| c.name.as_str()).collect();
    let got: Vec<&str> = names.iter().map(String::as_str).collect();
    if expected != got {
        return Err(Error::Dimension(format!(
            "normalization channels {expected:?} do not match dataset channels {got:?}"
        )));
    }
    Ok(())
}

fn scale(
    m: &DMatrix<f64>,
    params: &NormalizationParams,
    f: fn(&ChannelScale, f64) -> f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| f(&params.channels[c], m[(r, c)]))
}

/// Min-max normalizes every channel of `ds` into [0, 1].
///
/// Constant channels map to 0 and are flagged in the returned parameters.
pub fn normalize(ds: &TrajectoryDataset) -> (TrajectoryDataset, NormalizationParams) {
    let params = NormalizationParams::fit(ds);
    for c in params.constant_channels() {
        log::warn!("channel {} is constant ({}); normalized to 0", c.name, c.min);
    }
    let scaled = params
        .apply(ds)
        .expect("parameters fitted on the same dataset always match it");
    (scaled, params)
}

/// Maps normalized columns back to raw units; `series` has one column per channel in `params`.
pub fn denormalize(series: &DMatrix<f64>, params: &NormalizationParams) -> Result<DMatrix<f64>> {
    if series.ncols() != params.channels.len() {
        return Err(Error::Dimension(format!(
            "series has {} columns, parameters describe {} channels",
            series.ncols(),
            params.channels.len()
        )));
    }
    Ok(scale(series, params, ChannelScale::inverse))
}

/// Block Hankel matrix: block row `s` (0-based) holds samples `s..s+columns`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlock {
    pub data: DMatrix<f64>,
    pub block_rows: usize,
    pub columns: usize,
    pub vars_per_block: usize,
}

impl HankelBlock {
    /// Rows `s*vars .. (s+1)*vars` of the block.
    pub fn block(&self, s: usize) -> nalgebra::DMatrixView<'_, f64> {
        self.data
            .rows(s * self.vars_per_block, self.vars_per_block)
    }
}

/// Stacks `block_rows` time-shifted copies of `series` (samples × vars).
///
/// Entry `(s*vars + v, j)` equals `series[(s + j, v)]`.
pub fn build_hankel(series: &DMatrix<f64>, block_rows: usize, columns: usize) -> Result<HankelBlock> {
    if block_rows == 0 || columns == 0 {
        return Err(Error::InvalidParameter(
            "block rows and columns must be positive".into(),
        ));
    }
    let required = block_rows + columns - 1;
    if series.nrows() < required {
        return Err(Error::InsufficientSamples {
            required,
            available: series.nrows(),
        });
    }
    let vars = series.ncols();
    let mut data = DMatrix::zeros(block_rows * vars, columns);
    for s in 0..block_rows {
        data.rows_mut(s * vars, vars)
            .copy_from(&series.rows(s, columns).transpose());
    }
    Ok(HankelBlock {
        data,
        block_rows,
        columns,
        vars_per_block: vars,
    })
}

/// Writes any matrix as CSV with the given header and an optional leading `#` comment.
pub(crate) fn write_matrix_csv(
    path: &Path,
    comment: Option<&str>,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    if let Some(c) = comment {
        writeln!(file, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
