//! Feed-forward ranking network: affine, batch norm, ReLU and dropout per
//! hidden layer, affine output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::scalar::Real;

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// One dense layer. `weight` is `out × in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    /// Present on hidden layers only.
    pub bn: Option<BatchNorm<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams<T> {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode<T> {
    /// Batch statistics and seeded inverted dropout.
    Train { seed: u64, dropout_input: T, dropout_hidden: T },
    /// Running statistics, no dropout. Deterministic.
    Eval,
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
    pub gamma: Vec<Vec<T>>,
    pub beta: Vec<Vec<T>>,
}

struct LayerCache<T> {
    input: Vec<T>,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    pre_relu: Vec<T>,
    mask: Vec<T>,
}

/// Intermediate values kept by a training-mode forward pass.
pub struct ForwardCache<T> {
    n_rows: usize,
    layers: Vec<LayerCache<T>>,
    batch_stats: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> NetworkParams<T> {
    /// He-initialized parameters; batch-norm scale 1, shift 0, running var 1.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self, NetError> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = layer_dims.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (n_in, n_out) = (layer_dims[l], layer_dims[l + 1]);
                let scale = (2.0 / n_in as f64).sqrt();
                let weight = (0..n_in * n_out)
                    .map(|_| T::lit(scale * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                let bn = (l + 1 < n_layers).then(|| BatchNorm {
                    gamma: vec![T::one(); n_out],
                    beta: vec![T::zero(); n_out],
                    running_mean: vec![T::zero(); n_out],
                    running_var: vec![T::one(); n_out],
                });
                Layer { n_in, n_out, weight, bias: vec![T::zero(); n_out], bn }
            })
            .collect();
        Ok(Self { layer_dims: layer_dims.to_vec(), layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Forward pass over `n_rows` samples stored row-major in `x`.
    pub fn forward(&self, x: &[T], n_rows: usize, mode: Mode<T>) -> Result<Vec<T>, NetError> {
        match mode {
            Mode::Eval => self.forward_eval(x, n_rows),
            Mode::Train { .. } => self.forward_train(x, n_rows, mode).map(|(s, _)| s),
        }
    }

    fn check_input(&self, x: &[T], n_rows: usize) -> Result<(), NetError> {
        if x.len() != n_rows * self.input_dim() {
            return Err(NetError::Shape(format!(
                "expected {} × {} inputs, got {} values",
                n_rows,
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    fn forward_eval(&self, x: &[T], n_rows: usize) -> Result<Vec<T>, NetError> {
        self.check_input(x, n_rows)?;
        let eps = T::lit(BN_EPS);
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = affine(layer, &h, n_rows);
            if let Some(bn) = &layer.bn {
                for row in z.chunks_mut(layer.n_out) {
                    for j in 0..layer.n_out {
                        let xhat = (row[j] - bn.running_mean[j]) / (bn.running_var[j] + eps).sqrt();
                        row[j] = (bn.gamma[j] * xhat + bn.beta[j]).max(T::zero());
                    }
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Training-mode forward pass returning scores and the backprop cache.
    pub fn forward_train(&self, x: &[T], n_rows: usize, mode: Mode<T>) -> Result<(Vec<T>, ForwardCache<T>), NetError> {
        self.check_input(x, n_rows)?;
        let Mode::Train { seed, dropout_input, dropout_hidden } = mode else {
            return Err(NetError::Domain("forward_train requires train mode".into()));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = T::lit(BN_EPS);
        let n = T::from_usize_lossy(n_rows);

        let input_mask = dropout_mask(&mut rng, x.len(), dropout_input);
        let mut h: Vec<T> = x.iter().zip(&input_mask).map(|(&a, &m)| a * m).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut batch_stats = Vec::new();
        for layer in &self.layers {
            let z = affine(layer, &h, n_rows);
            let input = std::mem::replace(&mut h, Vec::new());
            match &layer.bn {
                Some(bn) => {
                    let m = layer.n_out;
                    let mut mean = vec![T::zero(); m];
                    let mut var = vec![T::zero(); m];
                    for row in z.chunks(m) {
                        for j in 0..m {
                            mean[j] += row[j];
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= n);
                    for row in z.chunks(m) {
                        for j in 0..m {
                            let d = row[j] - mean[j];
                            var[j] += d * d;
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n);
                    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                    let mut xhat = vec![T::zero(); z.len()];
                    let mut pre = vec![T::zero(); z.len()];
                    for (r, row) in z.chunks(m).enumerate() {
                        for j in 0..m {
                            let xh = (row[j] - mean[j]) * inv_std[j];
                            xhat[r * m + j] = xh;
                            pre[r * m + j] = bn.gamma[j] * xh + bn.beta[j];
                        }
                    }
                    let mask = dropout_mask(&mut rng, pre.len(), dropout_hidden);
                    h = pre.iter().zip(&mask).map(|(&p, &k)| p.max(T::zero()) * k).collect();
                    caches.push(LayerCache { input, xhat, inv_std, pre_relu: pre, mask });
                    batch_stats.push((mean, var));
                }
                None => {
                    h = z;
                    caches.push(LayerCache {
                        input,
                        xhat: Vec::new(),
                        inv_std: Vec::new(),
                        pre_relu: Vec::new(),
                        mask: Vec::new(),
                    });
                }
            }
        }
        Ok((h, ForwardCache { n_rows, layers: caches, batch_stats }))
    }

    /// Backpropagates `d_scores` (one value per row) through a training pass.
    pub fn backward(&self, cache: &ForwardCache<T>, d_scores: &[T]) -> Gradients<T> {
        let n_rows = cache.n_rows;
        let n = T::from_usize_lossy(n_rows);
        let nl = self.layers.len();
        let mut grads = Gradients {
            weight: self.layers.iter().map(|l| vec![T::zero(); l.weight.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![T::zero(); l.n_out]).collect(),
            gamma: self.layers.iter().map(|l| vec![T::zero(); if l.bn.is_some() { l.n_out } else { 0 }]).collect(),
            beta: self.layers.iter().map(|l| vec![T::zero(); if l.bn.is_some() { l.n_out } else { 0 }]).collect(),
        };
        let mut d_out = d_scores.to_vec();
        for l in (0..nl).rev() {
            let layer = &self.layers[l];
            let c = &cache.layers[l];
            let m = layer.n_out;
            // d_out is the gradient w.r.t. this layer's output
            let dz: Vec<T> = match &layer.bn {
                Some(bn) => {
                    let mut dy = vec![T::zero(); d_out.len()];
                    for k in 0..d_out.len() {
                        if c.pre_relu[k] > T::zero() {
                            dy[k] = d_out[k] * c.mask[k];
                        }
                    }
                    let mut sum_dxhat = vec![T::zero(); m];
                    let mut sum_dxhat_xhat = vec![T::zero(); m];
                    for r in 0..n_rows {
                        for j in 0..m {
                            let k = r * m + j;
                            grads.gamma[l][j] += dy[k] * c.xhat[k];
                            grads.beta[l][j] += dy[k];
                            let dxh = dy[k] * bn.gamma[j];
                            sum_dxhat[j] += dxh;
                            sum_dxhat_xhat[j] += dxh * c.xhat[k];
                        }
                    }
                    let mut dz = vec![T::zero(); d_out.len()];
                    for r in 0..n_rows {
                        for j in 0..m {
                            let k = r * m + j;
                            let dxh = dy[k] * bn.gamma[j];
                            dz[k] = c.inv_std[j] / n * (n * dxh - sum_dxhat[j] - c.xhat[k] * sum_dxhat_xhat[j]);
                        }
                    }
                    dz
                }
                None => d_out,
            };
            let n_in = layer.n_in;
            let mut d_in = vec![T::zero(); n_rows * n_in];
            for r in 0..n_rows {
                let x_row = &c.input[r * n_in..(r + 1) * n_in];
                let dx_row = &mut d_in[r * n_in..(r + 1) * n_in];
                for j in 0..m {
                    let g = dz[r * m + j];
                    if g == T::zero() {
                        continue;
                    }
                    grads.bias[l][j] += g;
                    let w_row = &layer.weight[j * n_in..(j + 1) * n_in];
                    let gw = &mut grads.weight[l][j * n_in..(j + 1) * n_in];
                    for k in 0..n_in {
                        gw[k] += g * x_row[k];
                        dx_row[k] += g * w_row[k];
                    }
                }
            }
            d_out = d_in;
        }
        grads
    }

    /// Plain gradient-descent step plus the running-statistics update.
    pub fn apply(&mut self, grads: &Gradients<T>, cache: &ForwardCache<T>, learning_rate: T, bn_momentum: T) {
        let mut stats = cache.batch_stats.iter();
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weight.iter_mut().zip(&grads.weight[l]) {
                *w -= learning_rate * *g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grads.bias[l]) {
                *b -= learning_rate * *g;
            }
            if let Some(bn) = &mut layer.bn {
                for (p, g) in bn.gamma.iter_mut().zip(&grads.gamma[l]) {
                    *p -= learning_rate * *g;
                }
                for (p, g) in bn.beta.iter_mut().zip(&grads.beta[l]) {
                    *p -= learning_rate * *g;
                }
                let (mean, var) = stats.next().expect("one batch statistic per hidden layer");
                for j in 0..layer.n_out {
                    bn.running_mean[j] = bn_momentum * bn.running_mean[j] + (T::one() - bn_momentum) * mean[j];
                    bn.running_var[j] = bn_momentum * bn.running_var[j] + (T::one() - bn_momentum) * var[j];
                }
            }
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<(), NetError> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(NetError::Shape("layer_dims needs at least two positive entries".into()));
    }
    if *dims.last().expect("non-empty") != 1 {
        return Err(NetError::Shape("layer_dims must end in 1".into()));
    }
    if dims[1..].windows(2).any(|w| w[0] <= w[1]) {
        return Err(NetError::Shape("hidden layer widths must strictly decrease".into()));
    }
    Ok(())
}

fn affine<T: Real>(layer: &Layer<T>, h: &[T], n_rows: usize) -> Vec<T> {
    let (n_in, n_out) = (layer.n_in, layer.n_out);
    let mut z = vec![T::zero(); n_rows * n_out];
    for r in 0..n_rows {
        let x = &h[r * n_in..(r + 1) * n_in];
        for j in 0..n_out {
            let w = &layer.weight[j * n_in..(j + 1) * n_in];
            let mut acc = layer.bias[j];
            for k in 0..n_in {
                acc += w[k] * x[k];
            }
            z[r * n_out + j] = acc;
        }
    }
    z
}

fn dropout_mask<T: Real>(rng: &mut ChaCha8Rng, len: usize, rate: T) -> Vec<T> {
    if rate <= T::zero() {
        return vec![T::one(); len];
    }
    let keep = T::one() - rate;
    let scale = T::one() / keep;
    let keep_f = keep.to_f64_lossy();
    (0..len).map(|_| if rng.random::<f64>() < keep_f { scale } else { T::zero() }).collect()
}
