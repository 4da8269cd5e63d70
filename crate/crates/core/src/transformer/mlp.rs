//! Dense network with batch normalization and exact backpropagation.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Real;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T: Real> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::from_elem(width, T::one()),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::from_elem(width, T::one()),
        }
    }
}

/// `y = x Wᵀ + b`, optionally followed by batch norm and ReLU. With batch
/// norm the bias cancels against the batch mean, so it stays at zero and
/// is not trained; `beta` takes its place.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    /// `out × in`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub bn: Option<BatchNorm<T>>,
}

impl<T: Real> Dense<T> {
    pub fn rows(&self) -> usize {
        self.weight.nrows()
    }

    pub fn cols(&self) -> usize {
        self.weight.ncols()
    }
}

/// Parameter gradients with the same layout as the network.
#[derive(Debug, Clone)]
pub struct Gradients<T: Real> {
    pub weight: Vec<Array2<T>>,
    pub bias: Vec<Array1<T>>,
    pub gamma: Vec<Option<Array1<T>>>,
    pub beta: Vec<Option<Array1<T>>>,
}

struct LayerCache<T: Real> {
    input: Array2<T>,
    /// Normalized with running statistics (a batch of one has no spread).
    frozen: bool,
    normalized: Option<Array2<T>>,
    inv_std: Option<Array1<T>>,
    activated: Option<Array2<T>>,
}

/// Stack of dense layers; every layer but the last has batch norm + ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Real> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    /// He-normal weights (variance `2 / fan_in`), zero biases, and a
    /// zero-initialized final layer.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "need input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let last = l + 1 == n;
                let weight = if last {
                    Array2::zeros((fan_out, fan_in))
                } else {
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    Array2::from_shape_simple_fn((fan_out, fan_in), || T::lit(normal.sample(&mut rng)))
                };
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                    bn: (!last).then(|| BatchNorm::new(fan_out)),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().rows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t()) + &layer.bias;
            if let Some(bn) = &layer.bn {
                let eps = T::lit(BN_EPS);
                Zip::from(z.columns_mut())
                    .and(&bn.running_mean)
                    .and(&bn.running_var)
                    .and(&bn.gamma)
                    .and(&bn.beta)
                    .for_each(|mut col, &m, &v, &g, &b| {
                        let inv = T::one() / (v + eps).sqrt();
                        col.mapv_inplace(|zi| ((zi - m) * inv * g + b).max(T::zero()));
                    });
            }
            h = z;
        }
        h
    }

    fn forward_train(&mut self, x: &Array2<T>, update_stats: bool) -> (Array2<T>, Vec<LayerCache<T>>) {
        let n = x.nrows();
        let nf = T::from_usize_lossy(n);
        let eps = T::lit(BN_EPS);
        let momentum = T::lit(BN_MOMENTUM);
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            let input = std::mem::replace(&mut h, Array2::zeros((0, 0)));
            match &mut layer.bn {
                None => {
                    caches.push(LayerCache {
                        input,
                        frozen: false,
                        normalized: None,
                        inv_std: None,
                        activated: None,
                    });
                    h = z;
                }
                Some(bn) if n == 1 => {
                    let inv_std = bn.running_var.mapv(|v| T::one() / (v + eps).sqrt());
                    let normalized = (&z - &bn.running_mean) * &inv_std;
                    let activated = (&normalized * &bn.gamma + &bn.beta).mapv(|v| v.max(T::zero()));
                    h = activated.clone();
                    caches.push(LayerCache {
                        input,
                        frozen: true,
                        normalized: Some(normalized),
                        inv_std: Some(inv_std),
                        activated: Some(activated),
                    });
                }
                Some(bn) => {
                    let mean = z.sum_axis(Axis(0)) / nf;
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf;
                    let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
                    let normalized = &centered * &inv_std;
                    let activated = (&normalized * &bn.gamma + &bn.beta).mapv(|v| v.max(T::zero()));
                    if update_stats {
                        let unbiased = &var * (nf / (nf - T::one()));
                        bn.running_mean = &bn.running_mean * (T::one() - momentum) + &(&mean * momentum);
                        bn.running_var = &bn.running_var * (T::one() - momentum) + &(&unbiased * momentum);
                    }
                    h = activated.clone();
                    caches.push(LayerCache {
                        input,
                        frozen: false,
                        normalized: Some(normalized),
                        inv_std: Some(inv_std),
                        activated: Some(activated),
                    });
                }
            }
        }
        (h, caches)
    }

    /// Mean over the batch of the squared L2 error per sample, in training
    /// mode, with its exact gradient.
    pub fn loss_and_gradients(&mut self, x: &Array2<T>, target: &Array2<T>, update_stats: bool) -> (T, Gradients<T>) {
        let n = T::from_usize_lossy(x.nrows());
        let (out, caches) = self.forward_train(x, update_stats);
        let diff = &out - target;
        let loss = diff.mapv(|v| v * v).sum() / n;
        let mut grad = diff * (T::lit(2.0) / n);

        let nl = self.layers.len();
        let mut gw = Vec::with_capacity(nl);
        let mut gb = Vec::with_capacity(nl);
        let mut gg = Vec::with_capacity(nl);
        let mut gbeta = Vec::with_capacity(nl);
        for (layer, cache) in self.layers.iter().zip(&caches).rev() {
            let dz = match (&layer.bn, &cache.normalized, &cache.inv_std, &cache.activated) {
                (Some(bn), Some(xhat), Some(inv_std), Some(act)) => {
                    let mut d = grad;
                    Zip::from(&mut d).and(act).for_each(|g, &a| {
                        if a <= T::zero() {
                            *g = T::zero();
                        }
                    });
                    gg.push(Some((&d * xhat).sum_axis(Axis(0))));
                    gbeta.push(Some(d.sum_axis(Axis(0))));
                    let dxhat = &d * &bn.gamma;
                    if cache.frozen {
                        // running statistics are constants here
                        dxhat * inv_std
                    } else {
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        // dz = inv_std / N * (N dxhat - Σ dxhat - xhat Σ dxhat·xhat)
                        let mut dz = dxhat * n - &sum_dxhat - &(xhat * &sum_dxhat_xhat);
                        dz *= &(inv_std / n);
                        dz
                    }
                }
                _ => {
                    gg.push(None);
                    gbeta.push(None);
                    grad
                }
            };
            gw.push(dz.t().dot(&cache.input));
            gb.push(if layer.bn.is_some() {
                Array1::zeros(layer.rows())
            } else {
                dz.sum_axis(Axis(0))
            });
            grad = dz.dot(&layer.weight);
        }
        gw.reverse();
        gb.reverse();
        gg.reverse();
        gbeta.reverse();
        (
            loss,
            Gradients {
                weight: gw,
                bias: gb,
                gamma: gg,
                beta: gbeta,
            },
        )
    }

    /// Training-mode loss without touching running statistics.
    pub fn train_loss(&self, x: &Array2<T>, target: &Array2<T>) -> T {
        let mut probe = self.clone();
        let (out, _) = probe.forward_train(x, false);
        let n = T::from_usize_lossy(x.nrows());
        (&out - target).mapv(|v| v * v).sum() / n
    }
}

impl<T: Real> Mlp<T> {
    /// Visits every trained parameter: per layer the weights, then either
    /// `gamma` and `beta` (batch-norm layers) or the bias.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for layer in &mut self.layers {
            layer.weight.iter_mut().for_each(&mut f);
            match &mut layer.bn {
                Some(bn) => {
                    bn.gamma.iter_mut().for_each(&mut f);
                    bn.beta.iter_mut().for_each(&mut f);
                }
                None => layer.bias.iter_mut().for_each(&mut f),
            }
        }
    }

    /// Copy with the `index`-th parameter (in [`Mlp::for_each_param_mut`]
    /// order) moved by `delta`.
    pub fn nudged(&self, index: usize, delta: T) -> Self {
        let mut net = self.clone();
        let mut k = 0;
        net.for_each_param_mut(|p| {
            if k == index {
                *p += delta;
            }
            k += 1;
        });
        net
    }
}

impl<T: Real> Gradients<T> {
    /// Gradients in [`Mlp::for_each_param_mut`] order.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in 0..self.weight.len() {
            out.extend(self.weight[l].iter());
            match (&self.gamma[l], &self.beta[l]) {
                (Some(gg), Some(gb)) => {
                    out.extend(gg.iter());
                    out.extend(gb.iter());
                }
                _ => out.extend(self.bias[l].iter()),
            }
        }
        out
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Option<Gradients<T>>,
    v: Option<Gradients<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, beta1: T, beta2: T) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: T::lit(1e-8),
            step: 0,
            m: None,
            v: None,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, g: &Gradients<T>) {
        self.step += 1;
        let zeros = || Gradients {
            weight: g.weight.iter().map(|a| Array2::zeros(a.raw_dim())).collect(),
            bias: g.bias.iter().map(|a| Array1::zeros(a.raw_dim())).collect(),
            gamma: g
                .gamma
                .iter()
                .map(|o| o.as_ref().map(|a| Array1::zeros(a.raw_dim())))
                .collect(),
            beta: g
                .beta
                .iter()
                .map(|o| o.as_ref().map(|a| Array1::zeros(a.raw_dim())))
                .collect(),
        };
        let m = self.m.get_or_insert_with(zeros);
        let v = self.v.get_or_insert_with(zeros);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        // lr · m̂ / (√v̂ + ε) with the bias corrections folded into constants
        let step_size = lr / (T::one() - b1.powi(self.step));
        let inv_sqrt_c2 = T::one() / (T::one() - b2.powi(self.step)).sqrt();
        let (a1, a2) = (T::one() - b1, T::one() - b2);

        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + a1 * g;
            *v = b2 * *v + a2 * g * g;
            *p -= step_size * *m / (v.sqrt() * inv_sqrt_c2 + eps);
        };

        for (l, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weight)
                .and(&g.weight[l])
                .and(&mut m.weight[l])
                .and(&mut v.weight[l])
                .for_each(|p, &gi, mi, vi| update(p, gi, mi, vi));
            if layer.bn.is_none() {
                Zip::from(&mut layer.bias)
                    .and(&g.bias[l])
                    .and(&mut m.bias[l])
                    .and(&mut v.bias[l])
                    .for_each(|p, &gi, mi, vi| update(p, gi, mi, vi));
            }
            if let Some(bn) = &mut layer.bn {
                let (gg, gb) = (g.gamma[l].as_ref().unwrap(), g.beta[l].as_ref().unwrap());
                let (mg, vg) = (m.gamma[l].as_mut().unwrap(), v.gamma[l].as_mut().unwrap());
                Zip::from(&mut bn.gamma)
                    .and(gg)
                    .and(mg)
                    .and(vg)
                    .for_each(|p, &gi, mi, vi| update(p, gi, mi, vi));
                let (mb, vb) = (m.beta[l].as_mut().unwrap(), v.beta[l].as_mut().unwrap());
                Zip::from(&mut bn.beta)
                    .and(gb)
                    .and(mb)
                    .and(vb)
                    .for_each(|p, &gi, mi, vi| update(p, gi, mi, vi));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_layer_starts_at_zero() {
        let net = Mlp::<f64>::new(&[5, 4, 4, 3], 1);
        let x = Array2::from_shape_fn((2, 5), |(i, j)| (i * 5 + j) as f64 * 0.1);
        assert!(net.forward(&x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn he_init_variance() {
        let net = Mlp::<f64>::new(&[400, 400, 2], 3);
        let w = &net.layers[0].weight;
        let var = w.mapv(|v| v * v).mean().unwrap();
        assert!((var - 2.0 / 400.0).abs() < 0.1 * 2.0 / 400.0);
    }
}
