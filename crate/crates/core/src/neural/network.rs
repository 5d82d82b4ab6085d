use rand::Rng;

use super::layers::{Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameter and input gradients from one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same order as [`Network::params`].
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            params: net.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            input: Tensor::zeros(net.input_shape()),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.params.iter_mut().for_each(|p| p.scale(factor));
        self.input.scale(factor);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_assign(b);
        }
        self.input.add_assign(&other.input);
    }
}

/// Sequential stack of layers with cached activations for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    /// Output shape of every layer.
    shapes: Vec<Vec<usize>>,
    /// Input of every layer from the last cached forward pass.
    cache: Option<Vec<Tensor>>,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(input_shape: &[usize], specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        let mut shapes = Vec::with_capacity(specs.len());
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for spec in &specs {
            layers.push(Layer::build(spec, &shape, rng)?);
            shape = spec.output_shape(&shape)?;
            shapes.push(shape.clone());
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            specs,
            layers,
            shapes,
            cache: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, |s| s.as_slice())
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Replaces every parameter tensor; shapes must match.
    pub fn set_params(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::Shape(format!(
                "network has {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.iter().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "parameter shape {:?} != {:?}",
                    slot.shape(),
                    v.shape()
                )));
            }
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            **slot = v;
        }
        self.cache = None;
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    fn check_finite(t: &Tensor) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Domain("non-finite activation".into()));
        }
        Ok(())
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            x = layer.forward(&x, shape);
        }
        Self::check_finite(&x)?;
        Ok(x)
    }

    /// Forward pass that caches every layer input for a later backward pass.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            let y = layer.forward(&x, shape);
            cache.push(x);
            x = y;
        }
        Self::check_finite(&x)?;
        self.cache = Some(cache);
        Ok(x)
    }

    fn backprop(&self, upstream: &Tensor, mut acc: Option<&mut [Tensor]>) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Protocol("backward called before forward".into()))?;
        if upstream.shape() != self.output_shape() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                self.output_shape()
            )));
        }
        // parameter offsets per layer into the flat parameter list
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.params().len();
        }
        let mut g = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let count = layer.params().len();
            let slot = match acc.as_deref_mut() {
                Some(all) if count > 0 => Some(&mut all[offsets[i]..offsets[i] + count]),
                _ => None,
            };
            g = layer.backward(&cache[i], &g, slot);
        }
        Ok(g)
    }

    /// Gradients of `upstream · output` with respect to parameters and input.
    pub fn backward(&self, upstream: &Tensor) -> Result<Gradients> {
        let mut params: Vec<Tensor> = self.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let input = self.backprop(upstream, Some(&mut params))?;
        Ok(Gradients { params, input })
    }

    /// Adds parameter gradients into `acc` and returns the input gradient.
    pub fn backward_accumulate(&self, upstream: &Tensor, acc: &mut [Tensor]) -> Result<Tensor> {
        if acc.len() != self.params().len() {
            return Err(Error::Shape("gradient accumulator does not match network".into()));
        }
        self.backprop(upstream, Some(acc))
    }

    /// Input gradient only; parameter gradients are skipped.
    pub fn backward_input(&self, upstream: &Tensor) -> Result<Tensor> {
        self.backprop(upstream, None)
    }

    /// Signs of every cached ReLU input; differs between two points exactly
    /// when some unit crossed its kink.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let Some(cache) = &self.cache else {
            return Vec::new();
        };
        self.layers
            .iter()
            .zip(cache)
            .filter(|(l, _)| matches!(l, Layer::Relu))
            .flat_map(|(_, x)| x.data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    }
}
