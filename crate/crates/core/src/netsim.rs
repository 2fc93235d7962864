//! Measurement-channel impairment: constant delay, Gaussian jitter and Bernoulli
//! packet loss with a hold of the last observed value.
//!
//! For every sample `k` after the first, the delivered sample index is
//! `max(1, k - round(nd/dt + g*nj/dt))` (1-based, `g` standard normal, delays in
//! sample periods). With probability `np` the packet is lost and the previous
//! observed value is held.
//!
//! Randomness comes from ChaCha8 seeded with `seed` through `seed_from_u64`.
//! Stream 0 draws the jitter normals, stream 1 the loss uniforms, stream 2 the
//! per-sample delay when a delay range is sampled. Every stream draws exactly
//! once per sample `k >= 2`, so the loss pattern does not depend on jitter.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::write_matrix_csv;
use crate::error::{Error, Result};

const JITTER_STREAM: u64 = 0;
const LOSS_STREAM: u64 = 1;
const DELAY_STREAM: u64 = 2;

/// Channel parameters. Delay and jitter are in milliseconds; jitter is a standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub nd_ms: f64,
    pub nj_ms: f64,
    /// Loss probability as a fraction in [0, 1].
    pub np: f64,
    #[serde(default)]
    pub seed: u64,
    /// Published delay range `[lo, hi]`; `nd_ms` holds its midpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_range_ms: Option<(f64, f64)>,
    /// Draw the delay uniformly over `delay_range_ms` for every sample instead of using `nd_ms`.
    #[serde(default)]
    pub sample_delay_range: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl NetworkScenario {
    pub fn new(nd_ms: f64, nj_ms: f64, np: f64, seed: u64) -> Result<Self> {
        let s = Self {
            nd_ms,
            nj_ms,
            np,
            seed,
            delay_range_ms: None,
            sample_delay_range: false,
            label: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Same as [`NetworkScenario::new`] with the loss given in percent.
    pub fn with_loss_percent(nd_ms: f64, nj_ms: f64, loss_pct: f64, seed: u64) -> Result<Self> {
        Self::new(nd_ms, nj_ms, loss_pct / 100.0, seed)
    }

    /// Perfect channel.
    pub fn ideal() -> Self {
        Self::new(0.0, 0.0, 0.0, 0).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.nd_ms.is_finite() && self.nj_ms.is_finite() && self.np.is_finite();
        if !finite || self.nd_ms < 0.0 || self.nj_ms < 0.0 || !(0.0..=1.0).contains(&self.np) {
            return Err(Error::InvalidParameter(format!(
                "scenario needs nd >= 0, nj >= 0, 0 <= np <= 1; got nd={}, nj={}, np={}",
                self.nd_ms, self.nj_ms, self.np
            )));
        }
        if let Some((lo, hi)) = self.delay_range_ms {
            if !(lo >= 0.0 && hi >= lo) {
                return Err(Error::InvalidParameter(format!("bad delay range [{lo}, {hi}]")));
            }
        }
        if self.sample_delay_range && self.delay_range_ms.is_none() {
            return Err(Error::InvalidParameter(
                "delay range sampling requested without a delay range".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The six published Tactile Internet scenarios, in table order.
///
/// Ranged delays are collapsed to their midpoint; the range is kept in
/// `delay_range_ms`. Loss values are the table's percentages divided by 100.
pub fn scenario_suite() -> Vec<NetworkScenario> {
    // (jitter ms, delay lo ms, delay hi ms, loss %)
    const ROWS: [(f64, f64, f64, f64); 6] = [
        (0.5, 0.5, 2.0, 0.01),
        (0.5, 0.5, 2.0, 0.001),
        (0.1, 1.0, 1.0, 0.01),
        (2.0, 5.0, 5.0, 0.001),
        (1.0, 1.0, 1.0, 0.001),
        (3.0, 200.0, 5000.0, 1.0),
    ];
    ROWS.iter()
        .enumerate()
        .map(|(i, &(nj, lo, hi, loss_pct))| NetworkScenario {
            nd_ms: (lo + hi) / 2.0,
            nj_ms: nj,
            np: loss_pct / 100.0,
            seed: 0,
            delay_range_ms: (hi > lo).then_some((lo, hi)),
            sample_delay_range: false,
            label: Some(format!("row{}", i + 1)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpairedStream {
    /// What the estimator sees, samples × channels.
    pub observed: DMatrix<f64>,
    /// 1-based index of the delivered clean sample, 0 when the sample was held.
    pub source_index: Vec<usize>,
    pub loss_mask: Vec<bool>,
}

impl ImpairedStream {
    pub fn len(&self) -> usize {
        self.observed.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loss_rate(&self) -> f64 {
        self.loss_mask.iter().filter(|&&l| l).count() as f64 / self.len().max(1) as f64
    }

    /// CSV with columns `k, <names>..., source_index, lost`.
    pub fn write_csv(&self, path: impl AsRef<Path>, names: &[String], comment: Option<&str>) -> Result<()> {
        let mut header = vec!["k".to_string()];
        header.extend(names.iter().cloned());
        header.push("source_index".into());
        header.push("lost".into());
        write_matrix_csv(
            path.as_ref(),
            comment,
            &header,
            (0..self.len()).map(|k| {
                let mut r = vec![(k + 1).to_string()];
                r.extend(self.observed.row(k).iter().map(|v| v.to_string()));
                r.push(self.source_index[k].to_string());
                r.push(u8::from(self.loss_mask[k]).to_string());
                r
            }),
        )
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Passes `clean` (samples × channels) through the channel described by `scenario`.
pub fn impair(clean: &DMatrix<f64>, scenario: &NetworkScenario, dt: f64) -> Result<ImpairedStream> {
    scenario.validate()?;
    if clean.nrows() < 2 {
        return Err(Error::TooFewRows {
            required: 2,
            found: clean.nrows(),
        });
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("sample period must be > 0, got {dt}")));
    }
    let n = clean.nrows();
    let dt_ms = dt * 1000.0;
    let mut jitter = stream(scenario.seed, JITTER_STREAM);
    let mut loss = stream(scenario.seed, LOSS_STREAM);
    let mut delay = stream(scenario.seed, DELAY_STREAM);

    let mut observed = DMatrix::zeros(n, clean.ncols());
    let mut source_index = vec![0; n];
    let mut loss_mask = vec![false; n];
    observed.row_mut(0).copy_from(&clean.row(0));
    source_index[0] = 1;

    for k in 1..n {
        let k1 = (k + 1) as f64;
        let g: f64 = jitter.sample(StandardNormal);
        let p: f64 = loss.random();
        let r: f64 = delay.random();
        let nd = match (scenario.sample_delay_range, scenario.delay_range_ms) {
            (true, Some((lo, hi))) => lo + r * (hi - lo),
            _ => scenario.nd_ms,
        };
        let shift = (nd / dt_ms + g * scenario.nj_ms / dt_ms).round();
        let del = (k1 - shift).max(1.0);
        // a negative jitter excursion cannot deliver a sample from the future
        let del = (del.min(k1) as usize) - 1;
        if p >= scenario.np {
            observed.row_mut(k).copy_from(&clean.row(del));
            source_index[k] = del + 1;
        } else {
            let prev = observed.row(k - 1).into_owned();
            observed.row_mut(k).copy_from(&prev);
            loss_mask[k] = true;
        }
    }
    Ok(ImpairedStream {
        observed,
        source_index,
        loss_mask,
    })
}
