//! Least-squares gradient boosting with depth-limited regression trees,
//! one ensemble per regime.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TimingError;
use crate::Real;

pub const MIN_REGIME_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { n_trees: 50, shrinkage: 0.1, max_depth: 3, min_leaf: 5 }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), TimingError> {
        if self.n_trees == 0 || !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) || self.max_depth == 0 || self.max_depth > 3 || self.min_leaf == 0 {
            return Err(TimingError::Config(format!("invalid boosting config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node<T> {
    Split { feature: usize, threshold: T, left: usize, right: usize },
    Leaf { value: T },
}

/// Flat tree; node 0 is the root. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Real> Tree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go<T>(t: &Tree<T>, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// Best split of `idx` by exact greedy search: every feature, every midpoint
/// between consecutive distinct values. Ties keep the first candidate.
fn best_split<T: Real>(x: &[Vec<T>], r: &[T], idx: &[usize], min_leaf: usize) -> Option<(usize, T, Vec<usize>, Vec<usize>)> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: T = idx.iter().map(|&i| r[i]).sum();
    let nt = T::from_usize_lossy(n);
    let base = total * total / nt;
    let mut best: Option<(T, usize, T)> = None;
    let p = x[idx[0]].len();
    let mut order = idx.to_vec();
    for f in 0..p {
        order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).expect("finite features").then(a.cmp(&b)));
        let mut left = T::zero();
        for k in 0..n - 1 {
            left += r[order[k]];
            let nl = k + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let (xa, xb) = (x[order[k]][f], x[order[k + 1]][f]);
            if xa == xb {
                continue;
            }
            let right = total - left;
            let gain = left * left / T::from_usize_lossy(nl) + right * right / T::from_usize_lossy(n - nl) - base;
            if gain > T::lit(1e-14) * (T::one() + base.abs()) && best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, (xa + xb) / T::lit(2.0)));
            }
        }
    }
    let (_, f, thr) = best?;
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][f] <= thr);
    Some((f, thr, l, r))
}

fn grow<T: Real>(x: &[Vec<T>], r: &[T], idx: Vec<usize>, depth: usize, cfg: &BoostConfig, nodes: &mut Vec<Node<T>>) -> usize {
    let me = nodes.len();
    let mean = idx.iter().map(|&i| r[i]).sum::<T>() / T::from_usize_lossy(idx.len());
    nodes.push(Node::Leaf { value: mean });
    if depth < cfg.max_depth {
        if let Some((feature, threshold, l, rr)) = best_split(x, r, &idx, cfg.min_leaf) {
            let left = grow(x, r, l, depth + 1, cfg, nodes);
            let right = grow(x, r, rr, depth + 1, cfg, nodes);
            nodes[me] = Node::Split { feature, threshold, left, right };
        }
    }
    me
}

/// Stagewise least-squares boosting for one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<T> {
    pub base: T,
    pub shrinkage: T,
    pub trees: Vec<Tree<T>>,
    /// Mean squared error before any tree, then after each tree.
    pub loss_trace: Vec<T>,
    /// Labels were constant; the ensemble is the base score alone.
    pub constant_labels: bool,
    pub n_samples: usize,
}

impl<T: Real> Ensemble<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.base + self.trees.iter().map(|t| self.shrinkage * t.predict(x)).sum::<T>()
    }
}

/// Samples are sorted into a canonical order first, so the fit does not
/// depend on the order they were passed in.
pub fn fit_ensemble<T: Real>(x: &[Vec<T>], y: &[T], cfg: &BoostConfig) -> Result<Ensemble<T>, TimingError> {
    cfg.validate()?;
    if x.len() != y.len() || x.is_empty() {
        return Err(TimingError::Shape(format!("{} rows vs {} labels", x.len(), y.len())));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(TimingError::Data("non-finite boosting input".into()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| {
        let mut c = y[a].partial_cmp(&y[b]).expect("finite");
        for (u, v) in x[a].iter().zip(&x[b]) {
            c = c.then(u.partial_cmp(v).expect("finite"));
        }
        c
    });
    let xs: Vec<Vec<T>> = order.iter().map(|&i| x[i].clone()).collect();
    let ys: Vec<T> = order.iter().map(|&i| y[i]).collect();
    let n = ys.len();
    let nt = T::from_usize_lossy(n);
    let constant_labels = ys.iter().all(|v| *v == ys[0]);
    let base = if constant_labels { ys[0] } else { ys.iter().copied().sum::<T>() / nt };
    let gamma = T::lit(cfg.shrinkage);
    let mut pred = vec![base; n];
    let mse = |pred: &[T]| ys.iter().zip(pred).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>() / nt;
    let mut trace = vec![mse(&pred)];
    let mut trees = Vec::new();
    if !constant_labels {
        for _ in 0..cfg.n_trees {
            let resid: Vec<T> = ys.iter().zip(&pred).map(|(a, b)| *a - *b).collect();
            let mut nodes = Vec::new();
            grow(&xs, &resid, (0..n).collect(), 0, cfg, &mut nodes);
            let tree = Tree { nodes };
            for (p, xi) in pred.iter_mut().zip(&xs) {
                *p += gamma * tree.predict(xi);
            }
            trace.push(mse(&pred));
            trees.push(tree);
        }
    }
    Ok(Ensemble { base, shrinkage: gamma, trees, loss_trace: trace, constant_labels, n_samples: n })
}

/// Global model plus one model per regime. Regimes with fewer than
/// `MIN_REGIME_SAMPLES` samples use the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble<T> {
    pub global: Ensemble<T>,
    pub per_regime: Vec<Option<Ensemble<T>>>,
    pub feature_names: Vec<String>,
}

impl<T: Real> BoostedEnsemble<T> {
    /// Prediction and whether the global fallback was used.
    pub fn predict(&self, x: &[T], regime: usize) -> (T, bool) {
        match self.per_regime.get(regime).and_then(|e| e.as_ref()) {
            Some(e) => (e.predict(x), false),
            None => (self.global.predict(x), true),
        }
    }

    pub fn fallback(&self, regime: usize) -> bool {
        self.per_regime.get(regime).is_none_or(|e| e.is_none())
    }
}

impl BoostedEnsemble<f64> {
    pub fn to_json(&self) -> Result<String, TimingError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, TimingError> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn fit_timing_model<T: Real>(
    x: &[Vec<T>],
    y: &[T],
    regimes: &[usize],
    n_regimes: usize,
    feature_names: Vec<String>,
    cfg: &BoostConfig,
) -> Result<BoostedEnsemble<T>, TimingError> {
    if regimes.len() != y.len() {
        return Err(TimingError::Shape(format!("{} regimes vs {} labels", regimes.len(), y.len())));
    }
    let global = fit_ensemble(x, y, cfg)?;
    let per_regime = (0..n_regimes)
        .into_par_iter()
        .map(|r| {
            let idx: Vec<usize> = (0..y.len()).filter(|&i| regimes[i] == r).collect();
            if idx.len() < MIN_REGIME_SAMPLES {
                return Ok(None);
            }
            let xs: Vec<Vec<T>> = idx.iter().map(|&i| x[i].clone()).collect();
            let ys: Vec<T> = idx.iter().map(|&i| y[i]).collect();
            fit_ensemble(&xs, &ys, cfg).map(Some)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoostedEnsemble { global, per_regime, feature_names })
}
