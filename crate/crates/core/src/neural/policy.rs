//! Actor and critic networks and the action activation that maps raw actor
//! outputs onto valid signed weights.

use rand::Rng;

use super::layers::LayerSpec;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::market_data::{PriceTensor, NUM_FEATURES};
use crate::portfolio_math::{arbitrage_flip_needed, initial_weights, normalize_signed, WeightVector};

pub const CONV_CHANNELS: usize = 16;
pub const HIDDEN_UNITS: usize = 64;
const KERNEL: [usize; 2] = [1, 3];

/// Smallest window the default two-convolution stack accepts.
pub const MIN_WINDOW: usize = 5;

fn trunk(in_channels: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            in_channels,
            out_channels: CONV_CHANNELS,
            kernel: KERNEL,
        },
        LayerSpec::Relu,
        LayerSpec::Conv2d {
            in_channels: CONV_CHANNELS,
            out_channels: CONV_CHANNELS,
            kernel: KERNEL,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: HIDDEN_UNITS },
        LayerSpec::Relu,
    ]
}

/// Default actor layers for `m` risky assets: `m + 1` raw outputs.
pub fn actor_specs(m: usize) -> Vec<LayerSpec> {
    let mut specs = trunk(NUM_FEATURES);
    specs.push(LayerSpec::Dense { units: m + 1 });
    specs
}

/// Default critic layers: price features plus the weight channel in, a linear `Q` out.
pub fn critic_specs() -> Vec<LayerSpec> {
    let mut specs = trunk(NUM_FEATURES + 1);
    specs.push(LayerSpec::Dense { units: 1 });
    specs
}

/// Policy network from `(4, m, n)` price tensors to `m + 1` raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    pub net: Network,
}

impl ActorNet {
    pub fn new<R: Rng + ?Sized>(m: usize, window: usize, rng: &mut R) -> Result<Self> {
        Self::from_specs(m, window, actor_specs(m), rng)
    }

    pub fn from_specs<R: Rng + ?Sized>(m: usize, window: usize, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let net = Network::new(&[NUM_FEATURES, m, window], specs, rng)?;
        Self::from_network(net)
    }

    pub fn from_network(net: Network) -> Result<Self> {
        let input = net.input_shape();
        if input.len() != 3 || input[0] != NUM_FEATURES || net.output_shape() != [input[1] + 1] {
            return Err(Error::Shape(format!(
                "actor maps (4, m, n) to m + 1 outputs, got {:?} -> {:?}",
                input,
                net.output_shape()
            )));
        }
        Ok(Self { net })
    }

    pub fn num_assets(&self) -> usize {
        self.net.input_shape()[1]
    }

    pub fn window(&self) -> usize {
        self.net.input_shape()[2]
    }

    /// Raw scores without caching.
    pub fn raw(&self, x: &PriceTensor) -> Result<Vec<f64>> {
        Ok(self.net.predict(&observation(x)?)?.into_data())
    }

    /// Raw scores, caching activations for [`Network::backward`].
    pub fn forward_raw(&mut self, x: &PriceTensor) -> Result<Vec<f64>> {
        Ok(self.net.forward(&observation(x)?)?.into_data())
    }

    /// Greedy weights for `x`.
    pub fn act(&self, x: &PriceTensor, arbitrage: bool) -> Result<WeightVector> {
        Ok(policy_action(&self.raw(x)?, arbitrage))
    }
}

/// Action-value network over `(5, m, n)` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub net: Network,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(m: usize, window: usize, rng: &mut R) -> Result<Self> {
        Self::from_specs(m, window, critic_specs(), rng)
    }

    pub fn from_specs<R: Rng + ?Sized>(m: usize, window: usize, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let net = Network::new(&[NUM_FEATURES + 1, m, window], specs, rng)?;
        Self::from_network(net)
    }

    pub fn from_network(net: Network) -> Result<Self> {
        let input = net.input_shape();
        if input.len() != 3 || input[0] != NUM_FEATURES + 1 || net.output_shape() != [1] {
            return Err(Error::Shape(format!(
                "critic maps (5, m, n) to a scalar, got {:?} -> {:?}",
                input,
                net.output_shape()
            )));
        }
        Ok(Self { net })
    }

    pub fn q(&self, x: &PriceTensor, w: &WeightVector) -> Result<f64> {
        Ok(self.net.predict(&critic_input(x, w)?)?.data()[0])
    }

    /// `Q(x, w)`, caching activations.
    pub fn forward_q(&mut self, x: &PriceTensor, w: &WeightVector) -> Result<f64> {
        Ok(self.net.forward(&critic_input(x, w)?)?.data()[0])
    }

    /// `dQ/dw` for the risky weights from the cached forward pass.
    pub fn action_gradient(&self) -> Result<Vec<f64>> {
        let gin = self.net.backward_input(&Tensor::new(vec![1], vec![1.0])?)?;
        Ok(weight_channel_gradient(&gin))
    }
}

/// Price tensor as a network input.
pub fn observation(x: &PriceTensor) -> Result<Tensor> {
    Tensor::new(x.shape().to_vec(), x.data().to_vec())
}

/// Appends the risky weights as a fifth channel, each row constant across the window.
pub fn critic_input(x: &PriceTensor, w: &WeightVector) -> Result<Tensor> {
    let [f, m, n] = x.shape();
    if w.num_assets() != m {
        return Err(Error::Shape(format!(
            "weights cover {} assets, tensor has {m}",
            w.num_assets()
        )));
    }
    let mut data = Vec::with_capacity((f + 1) * m * n);
    data.extend_from_slice(x.data());
    for &wi in w.risky() {
        data.extend(std::iter::repeat_n(wi, n));
    }
    Tensor::new(vec![f + 1, m, n], data)
}

/// Sums the critic input gradient over the weight channel's window columns.
pub fn weight_channel_gradient(input_grad: &Tensor) -> Vec<f64> {
    let [c, m, n] = [input_grad.shape()[0], input_grad.shape()[1], input_grad.shape()[2]];
    let base = (c - 1) * m * n;
    (0..m)
        .map(|i| input_grad.data()[base + i * n..base + (i + 1) * n].iter().sum())
        .collect()
}

/// Min-max scale to `[0, 1]`, stretch to `[-1, 1]`, clamp cash at zero, and
/// divide by the absolute sum. Equal scores fall back to all cash.
pub fn minmax_action(raw: &[f64]) -> WeightVector {
    assert!(raw.len() >= 2, "action needs cash plus at least one asset");
    let (lo, hi) = min_max(raw);
    if !(hi > lo) {
        return initial_weights(raw.len() - 1);
    }
    let x: Vec<f64> = raw.iter().map(|&r| 2.0 * ((r - lo) / (hi - lo) - 0.5)).collect();
    normalize_signed(&x).unwrap_or_else(|_| initial_weights(raw.len() - 1))
}

/// [`minmax_action`] followed by the arbitrage sign rule when enabled.
pub fn policy_action(raw: &[f64], arbitrage: bool) -> WeightVector {
    let w = minmax_action(raw);
    if arbitrage {
        crate::portfolio_math::enforce_arbitrage(&w)
    } else {
        w
    }
}

fn min_max(raw: &[f64]) -> (f64, f64) {
    raw.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn argmin_argmax(raw: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &r) in raw.iter().enumerate() {
        if r < raw[imin] {
            imin = i;
        }
        if r > raw[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Pulls a gradient on the output of [`policy_action`] back onto `raw`.
pub fn policy_action_backward(raw: &[f64], grad_w: &[f64], arbitrage: bool) -> Vec<f64> {
    let mut g = grad_w.to_vec();
    if arbitrage && arbitrage_flip_needed(minmax_action(raw).as_slice()) {
        let last = g.len() - 1;
        g[last] = -g[last];
    }
    minmax_action_backward(raw, &g)
}

/// Vector-Jacobian product of [`minmax_action`] at `raw`.
pub fn minmax_action_backward(raw: &[f64], grad_w: &[f64]) -> Vec<f64> {
    let len = raw.len();
    let (imin, imax) = argmin_argmax(raw);
    let (lo, hi) = (raw[imin], raw[imax]);
    if !(hi > lo) {
        return vec![0.0; len];
    }
    let span = hi - lo;
    let mut z: Vec<f64> = raw.iter().map(|&r| 2.0 * ((r - lo) / span - 0.5)).collect();
    let cash_active = z[0] > 0.0;
    z[0] = z[0].max(0.0);
    let s: f64 = z.iter().map(|v| v.abs()).sum();

    // through w = z / Σ|z|
    let gz_dot: f64 = grad_w.iter().zip(&z).map(|(g, zi)| g * zi).sum();
    let mut gx: Vec<f64> = (0..len)
        .map(|k| grad_w[k] / s - sign(z[k]) * gz_dot / (s * s))
        .collect();
    // through the cash clamp
    if !cash_active {
        gx[0] = 0.0;
    }
    // through x_j = 2 (r_j - lo) / span - 1
    let sum_gx: f64 = gx.iter().sum();
    let weighted: f64 = gx.iter().zip(raw).map(|(g, r)| g * (r - lo)).sum();
    let mut gr: Vec<f64> = gx.iter().map(|g| 2.0 / span * g).collect();
    gr[imin] -= 2.0 / span * sum_gx;
    let c = 2.0 / (span * span) * weighted;
    gr[imax] -= c;
    gr[imin] += c;
    gr
}
