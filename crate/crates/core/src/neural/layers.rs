use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// One layer of a sequential network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) stride-1 convolution over `(channels, rows, cols)` input.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
    },
    /// Fully connected layer over a flat input.
    Dense { units: usize },
    Relu,
    Flatten,
}

impl LayerSpec {
    /// Shape produced from `input`, or a shape error when they do not compose.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: [kh, kw],
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(Error::Shape(format!(
                        "conv2d expects ({in_channels}, h, w), got {input:?}"
                    )));
                }
                if kh == 0 || kw == 0 || input[1] < kh || input[2] < kw {
                    return Err(Error::Shape(format!(
                        "kernel {kh}x{kw} does not fit input {input:?}"
                    )));
                }
                Ok(vec![out_channels, input[1] - kh + 1, input[2] - kw + 1])
            }
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err(Error::Shape(format!("dense expects a flat input, got {input:?}")));
                }
                Ok(vec![units])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    /// `(out, in, kh, kw)`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub in_f: usize,
    pub out_f: usize,
    /// `(out, in)`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu,
    Flatten,
}

fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

impl Layer {
    pub fn build<R: Rng + ?Sized>(spec: &LayerSpec, input: &[usize], rng: &mut R) -> Result<Layer> {
        spec.output_shape(input)?;
        Ok(match *spec {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel: [kh, kw],
            } => Layer::Conv2d(Conv2d {
                in_c: in_channels,
                out_c: out_channels,
                kh,
                kw,
                weight: glorot(
                    &[out_channels, in_channels, kh, kw],
                    in_channels * kh * kw,
                    out_channels * kh * kw,
                    rng,
                ),
                bias: Tensor::zeros(&[out_channels]),
            }),
            LayerSpec::Dense { units } => Layer::Dense(Dense {
                in_f: input[0],
                out_f: units,
                weight: glorot(&[units, input[0]], input[0], units, rng),
                bias: Tensor::zeros(&[units]),
            }),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Flatten => Layer::Flatten,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Relu | Layer::Flatten => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Relu | Layer::Flatten => vec![],
        }
    }

    pub fn forward(&self, input: &Tensor, out_shape: &[usize]) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.forward(input, out_shape),
            Layer::Dense(d) => d.forward(input),
            Layer::Relu => {
                let data = input.data().iter().map(|&x| x.max(0.0)).collect();
                Tensor::new(input.shape().to_vec(), data).unwrap()
            }
            Layer::Flatten => Tensor::new(out_shape.to_vec(), input.data().to_vec()).unwrap(),
        }
    }

    /// Returns the input gradient; adds parameter gradients into `grads`
    /// when given (same order as [`Layer::params`]).
    pub fn backward(&self, input: &Tensor, upstream: &Tensor, grads: Option<&mut [Tensor]>) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.backward(input, upstream, grads),
            Layer::Dense(d) => d.backward(input, upstream, grads),
            Layer::Relu => {
                let data = input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Tensor::new(input.shape().to_vec(), data).unwrap()
            }
            Layer::Flatten => Tensor::new(input.shape().to_vec(), upstream.data().to_vec()).unwrap(),
        }
    }
}

impl Conv2d {
    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    /// Receptive field of every output position as one row, in weight order.
    fn im2col(&self, input: &Tensor, ho: usize, wo: usize) -> Vec<f64> {
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let x = input.data();
        let kdim = self.patch_len();
        let mut col = vec![0.0; ho * wo * kdim];
        for r in 0..ho {
            for cx in 0..wo {
                let row = &mut col[(r * wo + cx) * kdim..(r * wo + cx + 1) * kdim];
                let mut j = 0;
                for c in 0..self.in_c {
                    for ky in 0..self.kh {
                        let src = (c * h + r + ky) * w + cx;
                        row[j..j + self.kw].copy_from_slice(&x[src..src + self.kw]);
                        j += self.kw;
                    }
                }
            }
        }
        col
    }

    fn forward(&self, input: &Tensor, out_shape: &[usize]) -> Tensor {
        let (ho, wo) = (out_shape[1], out_shape[2]);
        let np = ho * wo;
        let kdim = self.patch_len();
        let col = self.im2col(input, ho, wo);
        let k = self.weight.data();
        let mut out = Tensor::zeros(out_shape);
        let y = out.data_mut();
        for o in 0..self.out_c {
            let wrow = &k[o * kdim..(o + 1) * kdim];
            let b = self.bias.data()[o];
            for (p, yv) in y[o * np..(o + 1) * np].iter_mut().enumerate() {
                *yv = b + dot(wrow, &col[p * kdim..(p + 1) * kdim]);
            }
        }
        out
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor, grads: Option<&mut [Tensor]>) -> Tensor {
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let (ho, wo) = (upstream.shape()[1], upstream.shape()[2]);
        let np = ho * wo;
        let kdim = self.patch_len();
        let g = upstream.data();
        let k = self.weight.data();
        let col = self.im2col(input, ho, wo);
        let mut dcol = vec![0.0; np * kdim];
        let mut grads = grads.map(|gs| {
            let (dw, db) = gs.split_at_mut(1);
            (dw[0].data_mut(), db[0].data_mut())
        });
        for o in 0..self.out_c {
            let wrow = &k[o * kdim..(o + 1) * kdim];
            let go = &g[o * np..(o + 1) * np];
            for (p, &gv) in go.iter().enumerate() {
                if gv != 0.0 {
                    axpy(gv, wrow, &mut dcol[p * kdim..(p + 1) * kdim]);
                }
            }
            if let Some((dw, db)) = grads.as_mut() {
                db[o] += go.iter().sum::<f64>();
                let drow = &mut dw[o * kdim..(o + 1) * kdim];
                for (p, &gv) in go.iter().enumerate() {
                    if gv != 0.0 {
                        axpy(gv, &col[p * kdim..(p + 1) * kdim], drow);
                    }
                }
            }
        }
        // scatter patch gradients back onto the input grid
        let mut din = Tensor::zeros(input.shape());
        let dx = din.data_mut();
        for r in 0..ho {
            for cx in 0..wo {
                let row = &dcol[(r * wo + cx) * kdim..(r * wo + cx + 1) * kdim];
                let mut j = 0;
                for c in 0..self.in_c {
                    for ky in 0..self.kh {
                        let dst = (c * h + r + ky) * w + cx;
                        axpy(1.0, &row[j..j + self.kw], &mut dx[dst..dst + self.kw]);
                        j += self.kw;
                    }
                }
            }
        }
        din
    }
}

impl Dense {
    fn forward(&self, input: &Tensor) -> Tensor {
        let x = input.data();
        let k = self.weight.data();
        let data = (0..self.out_f)
            .map(|o| self.bias.data()[o] + dot(&k[o * self.in_f..(o + 1) * self.in_f], x))
            .collect();
        Tensor::new(vec![self.out_f], data).unwrap()
    }

    fn backward(&self, input: &Tensor, upstream: &Tensor, grads: Option<&mut [Tensor]>) -> Tensor {
        let x = input.data();
        let g = upstream.data();
        let k = self.weight.data();
        let mut din = Tensor::zeros(&[self.in_f]);
        for (o, &go) in g.iter().enumerate() {
            if go != 0.0 {
                axpy(go, &k[o * self.in_f..(o + 1) * self.in_f], din.data_mut());
            }
        }
        if let Some(grads) = grads {
            let (dw, db) = grads.split_at_mut(1);
            let dw = dw[0].data_mut();
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    axpy(go, x, &mut dw[o * self.in_f..(o + 1) * self.in_f]);
                }
            }
            axpy(1.0, g, db[0].data_mut());
        }
        din
    }
}
