//! Reproducible experiments: configuration, identification, validation and
//! scenario sweeps.
//!
//! Every command is a pure function of its [`ExperimentConfig`] and the toolkit
//! version. Output files carry the config hash and the accuracy metric: JSON
//! documents in `config_hash` / `metric_def` fields, CSV files in a leading
//! `#` comment line.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{
    load_dataset, load_jigsaws_kinematics, normalize, write_matrix_csv, CsvLayout, JigsawsMapping,
    NormalizationParams, TrajectoryDataset, DEFAULT_DT,
};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate_noise_empirical, run_filter, BootstrapOptions, EstimationRun, FilterOptions,
    FilterState, NoiseModel, ResidualInput, UpdateMode, DEFAULT_EPS_Q, DEFAULT_EPS_R,
};
use crate::metrics::{
    calibrate_accuracy, evaluate_run, fit_report, AccuracyMetric, Calibration, EstimationReport,
    FitReport, DEFAULT_MAX_LAG, PUBLISHED_PAIRS,
};
use crate::netsim::{impair, scenario_suite, ImpairedStream, NetworkScenario};
use crate::sysid::{identify, OrderCriterion, StateSpaceModel, SubspaceDecomposition, DEFAULT_BLOCK_ROWS};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// Role-prefixed CSV (`t,u:<name>...,y:<name>...`).
    #[default]
    Csv,
    /// Raw 76-column JIGSAWS kinematics text file.
    Jigsaws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Independent validation trial. Without it, `split` carves one off `path`.
    pub validation_path: Option<PathBuf>,
    pub format: DataFormat,
    pub jigsaws_mapping: JigsawsMapping,
    pub dt: Option<f64>,
    pub inputs: Option<Vec<String>>,
    pub outputs: Option<Vec<String>>,
    /// Identification fraction when no validation file is given.
    pub split: Option<f64>,
    /// Free-form label recorded with the outputs (task, subject, trial).
    pub trial: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub block_rows: usize,
    pub order: OrderCriterion,
    /// Use a previously identified model instead of identifying inline.
    pub model_path: Option<PathBuf>,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            block_rows: DEFAULT_BLOCK_ROWS,
            order: OrderCriterion::default(),
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub eps_q: f64,
    pub eps_r: f64,
    pub iterations: usize,
    pub residual_input: ResidualInput,
    pub update_mode: UpdateMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            eps_q: DEFAULT_EPS_Q,
            eps_r: DEFAULT_EPS_R,
            iterations: 1,
            residual_input: ResidualInput::Current,
            update_mode: UpdateMode::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub metric: AccuracyMetric,
    /// Leading samples excluded from RMSE; defaults to ten times the model order.
    pub burn_in: Option<usize>,
    pub max_lag: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            metric: AccuracyMetric::default(),
            burn_in: None,
            max_lag: DEFAULT_MAX_LAG,
        }
    }
}

/// A scenario as written in a config file. Loss is `np` (fraction) or `np_percent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub nd_ms: f64,
    pub nj_ms: f64,
    pub np: Option<f64>,
    pub np_percent: Option<f64>,
    /// Overrides the seed derived from the master seed.
    pub seed: Option<u64>,
    pub delay_range_ms: Option<(f64, f64)>,
    pub label: Option<String>,
}

impl ScenarioSpec {
    pub fn to_scenario(&self) -> Result<NetworkScenario> {
        let np = match (self.np, self.np_percent) {
            (Some(f), None) => f,
            (None, Some(p)) => p / 100.0,
            (None, None) => 0.0,
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either np or np_percent, not both".into()))
            }
        };
        let s = NetworkScenario {
            nd_ms: self.nd_ms,
            nj_ms: self.nj_ms,
            np,
            seed: self.seed.unwrap_or(0),
            delay_range_ms: self.delay_range_ms,
            sample_delay_range: false,
            label: self.label.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Run the six published scenarios when `scenarios` is empty.
    pub suite: bool,
    pub scenarios: Vec<ScenarioSpec>,
    /// Draw ranged delays per sample instead of using the midpoint.
    pub sample_delay_range: bool,
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            suite: true,
            scenarios: Vec::new(),
            sample_delay_range: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub identify: IdentifyConfig,
    pub filter: FilterConfig,
    pub metrics: MetricsConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            identify: IdentifyConfig::default(),
            filter: FilterConfig::default(),
            metrics: MetricsConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text`, applying `key.path=value` overrides before deserializing.
    ///
    /// Values are parsed as TOML and fall back to plain strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {o:?}")))?;
            let mut node = &mut table;
            for p in parts {
                node = node
                    .entry(p)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{p} is not a table in {key}")))?;
            }
            node.insert(last.to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// Rejects parameter values no command can run with.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.identify.block_rows == 0 {
            return bad("identify.block_rows must be at least 1".into());
        }
        if let Some(f) = self.data.split {
            if !(f > 0.0 && f < 1.0) {
                return bad(format!("data.split must lie in (0, 1), got {f}"));
            }
        }
        if let Some(dt) = self.data.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("data.dt must be positive, got {dt}"));
            }
        }
        let f = &self.filter;
        if !(f.eps_q > 0.0 && f.eps_r > 0.0 && f.eps_q.is_finite() && f.eps_r.is_finite()) {
            return bad(format!("filter.eps_q and filter.eps_r must be positive, got {} and {}", f.eps_q, f.eps_r));
        }
        if f.iterations == 0 {
            return bad("filter.iterations must be at least 1".into());
        }
        if self.metrics.max_lag == 0 {
            return bad("metrics.max_lag must be at least 1".into());
        }
        self.scenarios().map(|_| ())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of the config,
    /// with `output_dir` cleared (it does not affect any output value).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    fn stamp(&self) -> String {
        format!(
            "config_hash={} metric_def={} version={VERSION}",
            self.hash(),
            self.metrics.metric
        )
    }

    /// Scenarios to sweep, with seeds derived from the master seed.
    pub fn scenarios(&self) -> Result<Vec<NetworkScenario>> {
        let base: Vec<(NetworkScenario, bool)> = if !self.sweep.scenarios.is_empty() {
            self.sweep
                .scenarios
                .iter()
                .map(|s| Ok((s.to_scenario()?, s.seed.is_some())))
                .collect::<Result<_>>()?
        } else if self.sweep.suite {
            scenario_suite().into_iter().map(|s| (s, false)).collect()
        } else {
            Vec::new()
        };
        Ok(base
            .into_iter()
            .enumerate()
            .map(|(i, (mut s, explicit))| {
                if !explicit {
                    s.seed = derive_seed(self.seed, i);
                }
                s.sample_delay_range = self.sweep.sample_delay_range && s.delay_range_ms.is_some();
                s
            })
            .collect())
    }

    fn bootstrap_options(&self, burn_in: usize) -> BootstrapOptions {
        BootstrapOptions {
            eps_q: self.filter.eps_q,
            eps_r: self.filter.eps_r,
            iterations: self.filter.iterations,
            residual_input: self.filter.residual_input,
            skip: burn_in,
            filter: FilterOptions {
                mode: self.filter.update_mode,
            },
        }
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scenario `index`: `splitmix64(master ^ splitmix64(index))`.
pub fn derive_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

/// Identification data (normalized), its scaling, and an optional validation split
/// scaled with the same parameters.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub identification: TrajectoryDataset,
    pub validation: Option<TrajectoryDataset>,
    pub params: NormalizationParams,
}

fn read_dataset(path: &Path, cfg: &DataConfig) -> Result<TrajectoryDataset> {
    match cfg.format {
        DataFormat::Csv => load_dataset(
            path,
            &CsvLayout {
                dt: cfg.dt,
                inputs: cfg.inputs.clone(),
                outputs: cfg.outputs.clone(),
            },
        ),
        DataFormat::Jigsaws => {
            load_jigsaws_kinematics(path, cfg.jigsaws_mapping, cfg.dt.unwrap_or(DEFAULT_DT))
        }
    }
}

pub fn prepare_data(cfg: &DataConfig) -> Result<PreparedData> {
    let path = cfg
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("data.path is required".into()))?;
    let raw = read_dataset(path, cfg)?;
    let (ident_raw, valid_raw) = match (&cfg.validation_path, cfg.split) {
        (Some(v), _) => (raw, Some(read_dataset(v, cfg)?)),
        (None, Some(f)) => {
            let (a, b) = raw.split(f)?;
            (a, Some(b))
        }
        (None, None) => (raw, None),
    };
    prepare_from(ident_raw, valid_raw)
}

/// Normalizes with statistics of the identification part only.
pub fn prepare_from(
    identification: TrajectoryDataset,
    validation: Option<TrajectoryDataset>,
) -> Result<PreparedData> {
    let (identification, params) = normalize(&identification);
    let validation = validation.map(|v| params.apply(&v)).transpose()?;
    Ok(PreparedData {
        identification,
        validation,
        params,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentifyLog {
    pub config_hash: String,
    pub metric_def: AccuracyMetric,
    pub version: String,
    pub trial: Option<String>,
    pub n_samples: usize,
    pub block_rows: usize,
    pub criterion: OrderCriterion,
    pub order: usize,
    pub energy_ratio: f64,
    pub n_singular_values: usize,
    pub spectral_radius: f64,
    pub unstable: bool,
    pub shift_condition: Option<f64>,
    pub input_condition: Option<f64>,
    pub warnings: Vec<String>,
    pub constant_channels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct IdentifyOutcome {
    pub model: StateSpaceModel,
    pub decomposition: SubspaceDecomposition,
    pub log: IdentifyLog,
}

/// Identifies a model from normalized data.
pub fn identify_model(cfg: &ExperimentConfig, data: &PreparedData) -> Result<IdentifyOutcome> {
    let ds = &data.identification;
    let ident = identify(
        &ds.inputs,
        &ds.outputs,
        cfg.identify.block_rows,
        cfg.identify.order,
        ds.dt,
    )?;
    let model = ident.model.with_normalization(data.params.clone());
    let mut warnings = model.flags.warnings.clone();
    if model.flags.unstable {
        warnings.push(format!("identified model is unstable (spectral radius {:.4})", model.spectral_radius));
    }
    let log = IdentifyLog {
        config_hash: cfg.hash(),
        metric_def: cfg.metrics.metric,
        version: VERSION.into(),
        trial: cfg.data.trial.clone(),
        n_samples: ds.len(),
        block_rows: cfg.identify.block_rows,
        criterion: cfg.identify.order,
        order: ident.order,
        energy_ratio: ident.energy_ratio,
        n_singular_values: ident.decomposition.singular_values.len(),
        spectral_radius: model.spectral_radius,
        unstable: model.flags.unstable,
        shift_condition: model.flags.shift_condition,
        input_condition: model.flags.input_condition,
        warnings,
        constant_channels: data.params.constant_channels().map(|c| c.name.clone()).collect(),
    };
    Ok(IdentifyOutcome {
        model,
        decomposition: ident.decomposition,
        log,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Wraps a serializable payload with the config hash and metric.
fn stamped_json<T: Serialize>(cfg: &ExperimentConfig, payload: &T) -> Result<String> {
    let mut v = serde_json::to_value(payload)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("config_hash".into(), cfg.hash().into());
        map.insert("metric_def".into(), cfg.metrics.metric.as_str().into());
        map.insert("version".into(), VERSION.into());
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

/// `identify`: writes `model.json`, `singular_values.csv`, `normalization.json`, `identify_log.json`.
pub fn cmd_identify(cfg: &ExperimentConfig) -> Result<IdentifyOutcome> {
    cfg.validate()?;
    let data = prepare_data(&cfg.data)?;
    let outcome = identify_model(cfg, &data)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let model_doc: serde_json::Value = serde_json::from_str(&outcome.model.to_json()?)?;
    write_file(&dir.join("model.json"), &stamped_json(cfg, &model_doc)?)?;
    let params_doc: serde_json::Value = serde_json::from_str(&data.params.to_json()?)?;
    write_file(&dir.join("normalization.json"), &stamped_json(cfg, &params_doc)?)?;
    outcome
        .decomposition
        .write_scree_csv(dir.join("singular_values.csv"), Some(&cfg.stamp()))?;
    write_file(
        &dir.join("identify_log.json"),
        &serde_json::to_string_pretty(&outcome.log)?,
    )?;
    Ok(outcome)
}

fn load_model(path: &Path) -> Result<StateSpaceModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StateSpaceModel::from_json(&text)
}

/// Model from `identify.model_path`, or identified inline.
pub fn obtain_model(cfg: &ExperimentConfig, data: &PreparedData) -> Result<StateSpaceModel> {
    match &cfg.identify.model_path {
        Some(p) => {
            let model = load_model(p)?;
            check_model_scaling(&model, &data.params)?;
            Ok(model)
        }
        None => Ok(identify_model(cfg, data)?.model),
    }
}

/// The model's stored scaling must be the one applied to the data.
pub fn check_model_scaling(model: &StateSpaceModel, params: &NormalizationParams) -> Result<()> {
    match &model.norm_params {
        Some(p) if p == params => Ok(()),
        Some(p) => Err(Error::Dimension(format!(
            "model normalization ({} channels) does not match the dataset's identification scaling ({} channels)",
            p.channels.len(),
            params.channels.len()
        ))),
        None => Err(Error::Config("model carries no normalization parameters".into())),
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOutcome {
    pub report: FitReport,
    pub truth: DMatrix<f64>,
}

/// `validate`: open-loop fit on the validation split, written as
/// `fit_report.json` and `validation_estimates.csv`.
///
/// With `identify.model_path` set, the validation file is scaled with the
/// model's stored parameters; channel names must match.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<ValidateOutcome> {
    cfg.validate()?;
    let (model, validation) = match &cfg.identify.model_path {
        Some(p) => {
            let model = load_model(p)?;
            let params = model
                .norm_params
                .clone()
                .ok_or_else(|| Error::Config("model carries no normalization parameters".into()))?;
            let path = cfg
                .data
                .validation_path
                .as_ref()
                .or(cfg.data.path.as_ref())
                .ok_or_else(|| Error::Config("data.validation_path or data.path is required".into()))?;
            let raw = read_dataset(path, &cfg.data)?;
            let scaled = params.apply(&raw)?;
            (model, scaled)
        }
        None => {
            let data = prepare_data(&cfg.data)?;
            let model = identify_model(cfg, &data)?.model;
            let validation = data.validation.unwrap_or(data.identification);
            (model, validation)
        }
    };
    let report = fit_report(&model, &validation, cfg.metrics.metric)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_file(&dir.join("fit_report.json"), &stamped_json(cfg, &report)?)?;
    let names = &validation.output_names;
    let mut header = vec!["k".to_string()];
    header.extend(names.iter().map(|n| format!("y_true_{n}")));
    header.extend(names.iter().map(|n| format!("y_est_{n}")));
    write_matrix_csv(
        &dir.join("validation_estimates.csv"),
        Some(&cfg.stamp()),
        &header,
        (0..validation.len()).map(|k| {
            let mut r = vec![(k + 1).to_string()];
            r.extend(validation.outputs.row(k).iter().map(|v| v.to_string()));
            r.extend(report.predictions.row(k).iter().map(|v| v.to_string()));
            r
        }),
    )?;
    Ok(ValidateOutcome {
        report,
        truth: validation.outputs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOptions {
    pub bootstrap: BootstrapOptions,
    pub metric: AccuracyMetric,
    pub burn_in: usize,
    pub max_lag: usize,
}

impl ScenarioOptions {
    pub fn from_config(cfg: &ExperimentConfig, order: usize) -> Self {
        let burn_in = cfg.metrics.burn_in.unwrap_or(10 * order);
        Self {
            bootstrap: cfg.bootstrap_options(burn_in),
            metric: cfg.metrics.metric,
            burn_in,
            max_lag: cfg.metrics.max_lag,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub impaired: ImpairedStream,
    pub noise: NoiseModel,
    pub run: EstimationRun,
    pub report: EstimationReport,
}

/// impair → bootstrap Q/R on the impaired stream → filter → score against the clean outputs.
pub fn run_scenario(
    model: &StateSpaceModel,
    data: &TrajectoryDataset,
    scenario: &NetworkScenario,
    options: &ScenarioOptions,
) -> Result<ScenarioRun> {
    let impaired = impair(&data.outputs, scenario, data.dt)?;
    let noise = estimate_noise_empirical(model, &data.inputs, &impaired.observed, &options.bootstrap)?;
    let mut run = run_filter(
        model,
        &noise,
        &data.inputs,
        &impaired.observed,
        &FilterState::default_for(model.order()),
        options.bootstrap.filter,
    )?;
    run.scenario = Some(scenario.clone());
    let report = evaluate_run(
        &run,
        &data.outputs,
        &data.output_names,
        options.metric,
        options.burn_in,
        options.max_lag,
    )?;
    Ok(ScenarioRun {
        impaired,
        noise,
        run,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub scenario: NetworkScenario,
    pub outcome: std::result::Result<ScenarioRun, String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub model: StateSpaceModel,
    pub rows: Vec<SweepRow>,
    pub channel_names: Vec<String>,
}

impl SweepOutcome {
    pub fn mean_accuracies(&self) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .map(|r| r.outcome.as_ref().ok().map(|o| o.report.mean_accuracy()))
            .collect()
    }
}

/// Runs every scenario on `data`; failures are recorded per row.
pub fn sweep_scenarios(
    model: &StateSpaceModel,
    data: &TrajectoryDataset,
    scenarios: &[NetworkScenario],
    options: &ScenarioOptions,
    parallel: bool,
) -> Vec<SweepRow> {
    let one = |s: &NetworkScenario| SweepRow {
        scenario: s.clone(),
        outcome: run_scenario(model, data, s, options).map_err(|e| e.to_string()),
    };
    if parallel {
        scenarios.par_iter().map(one).collect()
    } else {
        scenarios.iter().map(one).collect()
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes the Table-style summary: `label, nj_ms, nd_ms, np, acc_*, rmse_*, mean_acc, status`.
pub fn write_sweep_summary(
    path: &Path,
    comment: Option<&str>,
    channel_names: &[String],
    rows: &[SweepRow],
) -> Result<()> {
    let mut header: Vec<String> = ["label", "nj_ms", "nd_ms", "np"].iter().map(|s| s.to_string()).collect();
    header.extend(channel_names.iter().map(|n| format!("acc_{n}")));
    header.extend(channel_names.iter().map(|n| format!("rmse_{n}")));
    header.push("mean_acc".into());
    header.push("status".into());
    write_matrix_csv(
        path,
        comment,
        &header,
        rows.iter().enumerate().map(|(i, row)| {
            let s = &row.scenario;
            let mut r = vec![
                s.label.clone().unwrap_or_else(|| format!("scenario{}", i + 1)),
                s.nj_ms.to_string(),
                s.nd_ms.to_string(),
                s.np.to_string(),
            ];
            match &row.outcome {
                Ok(o) => {
                    r.extend(o.report.accuracy_pct.iter().map(|&v| fmt_value(v)));
                    r.extend(o.report.rmse.iter().map(|&v| fmt_value(v)));
                    r.push(fmt_value(o.report.mean_accuracy()));
                    r.push("ok".into());
                }
                Err(e) => {
                    r.extend(std::iter::repeat_n(String::new(), 2 * channel_names.len() + 1));
                    r.push(format!("error: {e}"));
                }
            }
            r
        }),
    )
}

/// `sweep`: `sweep_summary.csv` plus per-scenario `scenario_<i>_run.csv` and `_report.json`.
///
/// Filters the validation split when one exists, otherwise the identification data.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let data = prepare_data(&cfg.data)?;
    let model = obtain_model(cfg, &data)?;
    let target = data.validation.as_ref().unwrap_or(&data.identification);
    let scenarios = cfg.scenarios()?;
    let options = ScenarioOptions::from_config(cfg, model.order());
    let rows = sweep_scenarios(&model, target, &scenarios, &options, cfg.sweep.parallel);

    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let stamp = cfg.stamp();
    write_sweep_summary(&dir.join("sweep_summary.csv"), Some(&stamp), &target.output_names, &rows)?;
    for (i, row) in rows.iter().enumerate() {
        if let Ok(o) = &row.outcome {
            o.run.write_csv(
                dir.join(format!("scenario_{}_run.csv", i + 1)),
                &target.output_names,
                Some(&stamp),
            )?;
            write_file(
                &dir.join(format!("scenario_{}_report.json", i + 1)),
                &stamped_json(cfg, &serde_json::json!({
                    "report": o.report,
                    "noise": serde_json::from_str::<serde_json::Value>(&o.noise.to_json()?)?,
                }))?,
            )?;
        }
    }
    Ok(SweepOutcome {
        model,
        rows,
        channel_names: target.output_names.clone(),
    })
}

/// `impair`: channel-only dry run on the (normalized) outputs, written as `impaired.csv`.
pub fn cmd_impair(cfg: &ExperimentConfig, scenario: &NetworkScenario) -> Result<ImpairedStream> {
    cfg.validate()?;
    let data = prepare_data(&cfg.data)?;
    let target = data.validation.as_ref().unwrap_or(&data.identification);
    let stream = impair(&target.outputs, scenario, target.dt)?;
    ensure_dir(&cfg.output_dir)?;
    stream.write_csv(
        cfg.output_dir.join("impaired.csv"),
        &target.output_names,
        Some(&cfg.stamp()),
    )?;
    Ok(stream)
}

/// `calibrate-accuracy`: scores accuracy formulas against the published pairs,
/// written as `accuracy_calibration.json`.
pub fn cmd_calibrate_accuracy(cfg: &ExperimentConfig) -> Result<Calibration> {
    let cal = calibrate_accuracy(&PUBLISHED_PAIRS)?;
    ensure_dir(&cfg.output_dir)?;
    write_file(
        &cfg.output_dir.join("accuracy_calibration.json"),
        &stamped_json(cfg, &cal)?,
    )?;
    Ok(cal)
}
