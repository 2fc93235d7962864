//! Estimation quality: RMSE, accuracy percentages, innovation whiteness and
//! open-loop fit of identified models.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::estimator::EstimationRun;
use crate::netsim::NetworkScenario;
use crate::sysid::{simulate, StateSpaceModel};

pub const DEFAULT_MAX_LAG: usize = 10;

pub fn rmse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(estimates, truth)?;
    let sq: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok((sq / truth.len() as f64).sqrt())
}

fn check_pair(estimates: &[f64], truth: &[f64]) -> Result<()> {
    if estimates.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "estimates have {} samples, truth has {}",
            estimates.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::TooFewRows { required: 1, found: 0 });
    }
    Ok(())
}

/// How an RMSE-style error is turned into a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    /// `100 (1 - RMSE / (max(truth) - min(truth)))`
    #[default]
    NrmseRange,
    /// `100 (1 - RMSE)`, meaningful on [0, 1]-normalized data.
    OneMinusRmse,
    /// `100 (1 - MAE / (max(truth) - min(truth)))`
    Nmae,
}

impl AccuracyMetric {
    pub const ALL: [AccuracyMetric; 3] = [
        AccuracyMetric::NrmseRange,
        AccuracyMetric::OneMinusRmse,
        AccuracyMetric::Nmae,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AccuracyMetric::NrmseRange => "nrmse_range",
            AccuracyMetric::OneMinusRmse => "one_minus_rmse",
            AccuracyMetric::Nmae => "nmae",
        }
    }
}

impl fmt::Display for AccuracyMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccuracyMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown accuracy metric {s:?}")))
    }
}

fn range(truth: &[f64]) -> f64 {
    let (lo, hi) = truth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Accuracy in percent, clipped to [0, 100].
pub fn accuracy_pct(estimates: &[f64], truth: &[f64], metric: AccuracyMetric) -> Result<f64> {
    check_pair(estimates, truth)?;
    let ranged = |err: f64| -> Result<f64> {
        let span = range(truth);
        if span <= 0.0 {
            return Err(Error::Degenerate(format!(
                "truth has zero range; {metric} is undefined"
            )));
        }
        Ok(100.0 * (1.0 - err / span))
    };
    let raw = match metric {
        AccuracyMetric::NrmseRange => ranged(rmse(estimates, truth)?)?,
        AccuracyMetric::OneMinusRmse => 100.0 * (1.0 - rmse(estimates, truth)?),
        AccuracyMetric::Nmae => {
            let mae = estimates
                .iter()
                .zip(truth)
                .map(|(e, t)| (e - t).abs())
                .sum::<f64>()
                / truth.len() as f64;
            ranged(mae)?
        }
    };
    Ok(raw.clamp(0.0, 100.0))
}

/// Sample autocorrelation at lags `0..=max_lag` of a mean-removed series.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 || series.len() <= max_lag {
        return Err(Error::TooFewRows {
            required: max_lag + 1,
            found: series.len(),
        });
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var: f64 = centered.iter().map(|v| v * v).sum();
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "zero-variance series: autocorrelation undefined".into(),
        ));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            centered
                .iter()
                .zip(&centered[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / var
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whiteness {
    /// Per channel, `max |rho(lag)|` over lags `1..=max_lag`.
    pub statistic: Vec<f64>,
    /// Per channel, autocorrelations at lags `1..=max_lag`.
    pub autocorrelations: Vec<Vec<f64>>,
    /// `1.96 / sqrt(N)`.
    pub band: f64,
    pub max_lag: usize,
    pub n_samples: usize,
}

impl Whiteness {
    /// Every lag of every channel lies inside `±k/sqrt(N)`.
    pub fn within(&self, k: f64) -> bool {
        let limit = k / (self.n_samples as f64).sqrt();
        self.statistic.iter().all(|&s| s <= limit)
    }
}

/// Whiteness of each column of `innovations` (samples × channels).
pub fn innovation_whiteness(innovations: &DMatrix<f64>, max_lag: usize) -> Result<Whiteness> {
    let n = innovations.nrows();
    let mut statistic = Vec::with_capacity(innovations.ncols());
    let mut autocorrelations = Vec::with_capacity(innovations.ncols());
    for col in innovations.column_iter() {
        let series: Vec<f64> = col.iter().copied().collect();
        let acf = autocorrelation(&series, max_lag)?;
        statistic.push(acf[1..].iter().fold(0.0_f64, |m, r| m.max(r.abs())));
        autocorrelations.push(acf[1..].to_vec());
    }
    Ok(Whiteness {
        statistic,
        autocorrelations,
        band: 1.96 / (n as f64).sqrt(),
        max_lag,
        n_samples: n,
    })
}

fn column(m: &DMatrix<f64>, c: usize, skip: usize) -> Vec<f64> {
    m.column(c).iter().skip(skip).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub channel_names: Vec<String>,
    /// Per channel, after the burn-in.
    pub rmse: Vec<f64>,
    /// Per channel, over every sample.
    pub rmse_all: Vec<f64>,
    pub accuracy_pct: Vec<f64>,
    /// Per channel innovation whiteness statistic; empty if undefined.
    pub whiteness: Vec<f64>,
    pub whiteness_band: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub scenario: Option<NetworkScenario>,
    pub metric_def: AccuracyMetric,
}

impl EstimationReport {
    pub fn mean_accuracy(&self) -> f64 {
        self.accuracy_pct.iter().sum::<f64>() / self.accuracy_pct.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Scores a filter run against the clean outputs `truth` (samples × channels).
pub fn evaluate_run(
    run: &EstimationRun,
    truth: &DMatrix<f64>,
    channel_names: &[String],
    metric: AccuracyMetric,
    burn_in: usize,
    max_lag: usize,
) -> Result<EstimationReport> {
    if run.estimates.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimates {:?} vs truth {:?}",
            run.estimates.shape(),
            truth.shape()
        )));
    }
    if burn_in >= truth.nrows() {
        return Err(Error::InvalidParameter(format!(
            "burn-in {burn_in} leaves no samples out of {}",
            truth.nrows()
        )));
    }
    let mut rmse_kept = Vec::new();
    let mut rmse_all = Vec::new();
    let mut accuracy = Vec::new();
    for c in 0..truth.ncols() {
        let (e, t) = (column(&run.estimates, c, burn_in), column(truth, c, burn_in));
        rmse_kept.push(rmse(&e, &t)?);
        accuracy.push(accuracy_pct(&e, &t, metric)?);
        rmse_all.push(rmse(&column(&run.estimates, c, 0), &column(truth, c, 0))?);
    }
    let innovations = run.innovations.rows(burn_in, truth.nrows() - burn_in).into_owned();
    let (whiteness, band) = match innovation_whiteness(&innovations, max_lag) {
        Ok(w) => (w.statistic, w.band),
        Err(_) => (Vec::new(), 1.96 / ((truth.nrows() - burn_in) as f64).sqrt()),
    };
    Ok(EstimationReport {
        channel_names: channel_names.to_vec(),
        rmse: rmse_kept,
        rmse_all,
        accuracy_pct: accuracy,
        whiteness,
        whiteness_band: band,
        n_samples: truth.nrows(),
        burn_in,
        scenario: run.scenario.clone(),
        metric_def: metric,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub channel_names: Vec<String>,
    pub rmse: Vec<f64>,
    pub accuracy_pct: Vec<f64>,
    pub n_samples: usize,
    pub metric_def: AccuracyMetric,
    #[serde(skip)]
    pub predictions: DMatrix<f64>,
}

/// Open-loop simulation of `model` on `validation` inputs from a zero state.
///
/// `validation` must already be scaled with the identification split's parameters.
pub fn fit_report(
    model: &StateSpaceModel,
    validation: &TrajectoryDataset,
    metric: AccuracyMetric,
) -> Result<FitReport> {
    if validation.n_inputs() != model.n_inputs() || validation.n_outputs() != model.n_outputs() {
        return Err(Error::Dimension(format!(
            "dataset has {} inputs / {} outputs, model has {} / {}",
            validation.n_inputs(),
            validation.n_outputs(),
            model.n_inputs(),
            model.n_outputs()
        )));
    }
    let predictions = simulate(model, &validation.inputs, &DVector::zeros(model.order()))?;
    let mut rmse_v = Vec::new();
    let mut acc = Vec::new();
    for c in 0..model.n_outputs() {
        let (p, t) = (column(&predictions, c, 0), column(&validation.outputs, c, 0));
        rmse_v.push(rmse(&p, &t)?);
        acc.push(accuracy_pct(&p, &t, metric)?);
    }
    Ok(FitReport {
        channel_names: validation.output_names.clone(),
        rmse: rmse_v,
        accuracy_pct: acc,
        n_samples: validation.len(),
        metric_def: metric,
        predictions,
    })
}

/// Published (RMSE, accuracy %) pairs: six scenarios × three axes, then the three
/// single-trajectory figures.
pub const PUBLISHED_PAIRS: [(f64, f64); 21] = [
    (0.0363, 96.67),
    (0.0308, 95.13),
    (0.0333, 97.52),
    (0.0356, 95.58),
    (0.0310, 95.61),
    (0.0337, 97.60),
    (0.0232, 98.68),
    (0.0196, 98.70),
    (0.0239, 99.00),
    (0.0600, 88.46),
    (0.0575, 89.32),
    (0.0581, 93.65),
    (0.0644, 90.66),
    (0.0600, 88.67),
    (0.0523, 93.47),
    (0.0811, 85.95),
    (0.0766, 87.68),
    (0.0748, 90.95),
    (0.0331, 94.80),
    (0.0297, 95.99),
    (0.0243, 97.67),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub metric: AccuracyMetric,
    /// Least-squares truth range for range-normalized formulas.
    pub fitted_range: Option<f64>,
    pub rms_error: f64,
    pub max_abs_error: f64,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pairs: Vec<(f64, f64)>,
    /// Range implied by each pair under the range-normalized RMSE formula.
    pub implied_ranges: Vec<f64>,
    pub candidates: Vec<CandidateScore>,
    pub best: AccuracyMetric,
}

/// Scores each accuracy formula against `(rmse, accuracy %)` pairs.
///
/// Range-normalized formulas get the single truth range that best fits all pairs.
/// The MAE variant assumes Gaussian errors (`MAE = sqrt(2/pi) RMSE`).
pub fn calibrate_accuracy(pairs: &[(f64, f64)]) -> Result<Calibration> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no calibration pairs".into()));
    }
    let mae_factor = (2.0 / std::f64::consts::PI).sqrt();
    let mut candidates: Vec<CandidateScore> = AccuracyMetric::ALL
        .into_iter()
        .map(|metric| {
            let scale = match metric {
                AccuracyMetric::Nmae => mae_factor,
                _ => 1.0,
            };
            // accuracy = 100 - 100 * scale * rmse * w, w = 1 / range
            let w = match metric {
                AccuracyMetric::OneMinusRmse => 1.0,
                _ => {
                    let num: f64 = pairs.iter().map(|(e, a)| scale * e * (100.0 - a)).sum();
                    let den: f64 = pairs.iter().map(|(e, _)| 100.0 * (scale * e).powi(2)).sum();
                    num / den
                }
            };
            let predicted: Vec<f64> = pairs
                .iter()
                .map(|(e, _)| (100.0 * (1.0 - scale * e * w)).clamp(0.0, 100.0))
                .collect();
            let errs: Vec<f64> = predicted.iter().zip(pairs).map(|(p, (_, a))| p - a).collect();
            CandidateScore {
                metric,
                fitted_range: (metric != AccuracyMetric::OneMinusRmse).then_some(1.0 / w),
                rms_error: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt(),
                max_abs_error: errs.iter().fold(0.0_f64, |m, e| m.max(e.abs())),
                predicted,
            }
        })
        .collect();
    candidates.sort_by(|a, b| a.rms_error.total_cmp(&b.rms_error));
    Ok(Calibration {
        pairs: pairs.to_vec(),
        implied_ranges: pairs.iter().map(|(e, a)| e / (1.0 - a / 100.0)).collect(),
        best: candidates[0].metric,
        candidates,
    })
}
