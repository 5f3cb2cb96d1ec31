//! Walk-forward training on expanding windows and score prediction.

use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{combined_loss, rank_probabilities};
use super::network::{Mode, NetworkParams};
use super::NetError;
use crate::features::{FeaturePanel, FeatureStore, FEATURE_NAMES};
use crate::marketdata::{InstrumentId, Panel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Input width first, then hidden widths, ending in 1.
    pub layer_dims: Vec<usize>,
    pub dropout_hidden: f64,
    pub dropout_input: f64,
    pub temperature: f64,
    pub loss_alpha: f64,
    pub learning_rate: f64,
    /// Epochs for a cold-started fit.
    pub epochs: usize,
    /// Epochs for a fit that starts from the previous retrain's parameters.
    pub warm_epochs: usize,
    pub warm_start: bool,
    /// Dates per mini-batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Forward-return horizon in trading days.
    pub horizon: usize,
    pub bn_momentum: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layer_dims: vec![FEATURE_NAMES.len(), 64, 32, 16, 1],
            dropout_hidden: 0.3,
            dropout_input: 0.1,
            temperature: 2.0,
            loss_alpha: 0.7,
            learning_rate: 0.05,
            epochs: 4,
            warm_epochs: 1,
            warm_start: true,
            batch_size: 8,
            seed: 17,
            horizon: 9,
            bn_momentum: 0.9,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let prob = |p: f64| (0.0..1.0).contains(&p);
        if !prob(self.dropout_hidden) || !prob(self.dropout_input) {
            return Err(NetError::Config("dropout rates must lie in [0, 1)".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(NetError::Config("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return Err(NetError::Config("loss_alpha must lie in [0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == 0 || self.horizon == 0 {
            return Err(NetError::Config("learning_rate, epochs, batch_size and horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(NetError::Config("bn_momentum must lie in [0, 1)".into()));
        }
        NetworkParams::<f64>::init(&self.layer_dims, 0).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub instrument_id: InstrumentId,
    pub raw_score: f64,
    pub rank_prob: f64,
}

/// Features and realized forward returns for one date's universe.
#[derive(Debug, Clone)]
pub struct TrainingDay {
    pub day: usize,
    pub n_rows: usize,
    pub x: Vec<f64>,
    pub returns: Vec<f64>,
}

impl TrainingDay {
    /// Last calendar index whose close this sample's label uses.
    pub fn label_day(&self, horizon: usize) -> usize {
        self.day + horizon
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub retrain_date: NaiveDate,
    pub n_dates: usize,
    pub n_samples: usize,
    /// Mean mini-batch loss per epoch.
    pub loss_trace: Vec<f64>,
    pub params: NetworkParams<f64>,
}

impl NetworkParams<f64> {
    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, NetError> {
        let p: Self = serde_json::from_str(s)?;
        Self::init(&p.layer_dims, 0)?;
        let consistent = p.layers.len() + 1 == p.layer_dims.len()
            && p.layers.iter().enumerate().all(|(l, layer)| {
                layer.n_in == p.layer_dims[l]
                    && layer.n_out == p.layer_dims[l + 1]
                    && layer.weight.len() == layer.n_in * layer.n_out
                    && layer.bias.len() == layer.n_out
            });
        if !consistent {
            return Err(NetError::Shape("serialized parameters do not match layer_dims".into()));
        }
        Ok(p)
    }

    pub fn save_json(&self, path: &Path) -> Result<(), NetError> {
        std::fs::write(path, self.to_json()?).map_err(|e| NetError::Training(format!("{}: {e}", path.display())))
    }

    pub fn load_json(path: &Path) -> Result<Self, NetError> {
        let s = std::fs::read_to_string(path).map_err(|e| NetError::Training(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}

/// One training list per day that has features and at least two labelled rows.
pub fn training_days(panel: &Panel, store: &FeatureStore, horizon: usize) -> Vec<TrainingDay> {
    (0..store.n_days())
        .into_par_iter()
        .filter_map(|day| {
            let df = store.get(day)?;
            let end = day + horizon;
            if end >= panel.n_days() {
                return None;
            }
            let dense = df.features.dense(0.0);
            let d = df.features.n_features();
            let mut x = Vec::new();
            let mut returns = Vec::new();
            for (row, &inst) in df.universe.indices.iter().enumerate() {
                let (Some(c0), Some(c1)) = (panel.close(day, inst), panel.close(end, inst)) else {
                    continue;
                };
                x.extend_from_slice(&dense[row * d..(row + 1) * d]);
                returns.push(c1 / c0 - 1.0);
            }
            (returns.len() >= 2).then(|| TrainingDay { day, n_rows: returns.len(), x, returns })
        })
        .collect()
}

/// Mini-batch gradient descent over date lists. Returns the fitted
/// parameters and the per-epoch mean loss.
pub fn train_on_days(
    days: &[&TrainingDay],
    init: NetworkParams<f64>,
    epochs: usize,
    cfg: &NetworkConfig,
    seed: u64,
) -> Result<(NetworkParams<f64>, Vec<f64>), NetError> {
    if days.is_empty() {
        return Err(NetError::Training("no training samples".into()));
    }
    let d = init.input_dim();
    if let Some(bad) = days.iter().find(|t| t.x.len() != t.n_rows * d) {
        return Err(NetError::Shape(format!("day {} has {} values for {} rows of width {d}", bad.day, bad.x.len(), bad.n_rows)));
    }
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..days.len()).collect();
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let n_rows: usize = batch.iter().map(|&k| days[k].n_rows).sum();
            let mut x = Vec::with_capacity(n_rows * d);
            for &k in batch {
                x.extend_from_slice(&days[k].x);
            }
            let mode = Mode::Train {
                seed: rng.random(),
                dropout_input: cfg.dropout_input,
                dropout_hidden: cfg.dropout_hidden,
            };
            let (scores, cache) = params.forward_train(&x, n_rows, mode)?;
            let mut d_scores = Vec::with_capacity(n_rows);
            let mut batch_loss = 0.0;
            let mut offset = 0;
            for &k in batch {
                let t = days[k];
                let (l, g) = combined_loss(&scores[offset..offset + t.n_rows], &t.returns, cfg.loss_alpha)?;
                batch_loss += l;
                d_scores.extend(g.into_iter().map(|v| v / batch.len() as f64));
                offset += t.n_rows;
            }
            let grads = params.backward(&cache, &d_scores);
            params.apply(&grads, &cache, cfg.learning_rate, cfg.bn_momentum);
            epoch_loss += batch_loss / batch.len() as f64;
            n_batches += 1;
        }
        let mean = epoch_loss / n_batches as f64;
        if !mean.is_finite() {
            return Err(NetError::Training("loss diverged".into()));
        }
        trace.push(mean);
    }
    Ok((params, trace))
}

/// Expanding-window training. The model for retrain date `d` only sees
/// dates `t` with `t + horizon < d`.
pub fn train_walk_forward(
    panel: &Panel,
    store: &FeatureStore,
    schedule: &[NaiveDate],
    cfg: &NetworkConfig,
) -> Result<Vec<TrainedModel>, NetError> {
    cfg.validate()?;
    let mut retrain_days = Vec::with_capacity(schedule.len());
    for date in schedule {
        let day = panel
            .day_index(*date)
            .ok_or_else(|| NetError::Domain(format!("retrain date {date} not in calendar")))?;
        retrain_days.push(day);
    }
    if retrain_days.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NetError::Domain("retrain schedule must be strictly increasing".into()));
    }
    let all = training_days(panel, store, cfg.horizon);
    let eligible = |d: usize| -> Vec<&TrainingDay> { all.iter().filter(|t| t.label_day(cfg.horizon) < d).collect() };
    let model = |k: usize, init: Option<NetworkParams<f64>>| -> Result<TrainedModel, NetError> {
        let d = retrain_days[k];
        let days = eligible(d);
        if days.is_empty() {
            return Err(NetError::Training(format!("no training data before {}", schedule[k])));
        }
        let seed = cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (start, epochs) = match init {
            Some(p) => (p, cfg.warm_epochs.max(1)),
            None => (NetworkParams::init(&cfg.layer_dims, cfg.seed)?, cfg.epochs),
        };
        let (params, loss_trace) = train_on_days(&days, start, epochs, cfg, seed)?;
        Ok(TrainedModel {
            retrain_date: schedule[k],
            n_dates: days.len(),
            n_samples: days.iter().map(|t| t.n_rows).sum(),
            loss_trace,
            params,
        })
    };
    if cfg.warm_start {
        let mut out: Vec<TrainedModel> = Vec::with_capacity(retrain_days.len());
        for k in 0..retrain_days.len() {
            let init = out.last().map(|m| m.params.clone());
            out.push(model(k, init)?);
        }
        Ok(out)
    } else {
        (0..retrain_days.len()).into_par_iter().map(|k| model(k, None)).collect()
    }
}

/// Eval-mode scores and temperature softmax for one date's feature panel.
pub fn predict_scores(params: &NetworkParams<f64>, features: &FeaturePanel, temperature: f64) -> Result<Vec<RankScore>, NetError> {
    if features.n_features() != params.input_dim() {
        return Err(NetError::Shape(format!(
            "{} features for a network of input width {}",
            features.n_features(),
            params.input_dim()
        )));
    }
    let raw = params.forward(&features.dense(0.0), features.n_rows(), Mode::Eval)?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let probs = rank_probabilities(&raw, temperature)?;
    Ok(features
        .instruments
        .iter()
        .zip(raw.into_iter().zip(probs))
        .map(|(id, (raw_score, rank_prob))| RankScore { instrument_id: id.clone(), raw_score, rank_prob })
        .collect())
}
