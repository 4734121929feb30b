use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FlError, ParamVector, Result};
use crate::numeric::stream_rng;

/// Architecture description; the parameter layout follows from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Fully connected ReLU network.
    Mlp {
        input: usize,
        hidden: Vec<usize>,
        classes: usize,
    },
    /// conv-pool-conv-pool-flatten-dense-dense with "same" padding,
    /// 2x2 max pooling and ReLU after every conv and the hidden dense layer.
    Cnn {
        channels: usize,
        height: usize,
        width: usize,
        filters: [usize; 2],
        kernel: usize,
        dense: usize,
        classes: usize,
    },
}

impl ModelSpec {
    /// 784-64-10 desk-scale network.
    pub fn desk_mlp() -> Self {
        ModelSpec::Mlp {
            input: 784,
            hidden: vec![64],
            classes: 10,
        }
    }

    /// Seven-layer MNIST CNN with 1,663,370 trainable parameters.
    pub fn reference_cnn() -> Self {
        ModelSpec::Cnn {
            channels: 1,
            height: 28,
            width: 28,
            filters: [32, 64],
            kernel: 5,
            dense: 512,
            classes: 10,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Mlp { input, .. } => *input,
            ModelSpec::Cnn {
                channels,
                height,
                width,
                ..
            } => channels * height * width,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelSpec::Mlp { classes, .. } | ModelSpec::Cnn { classes, .. } => *classes,
        }
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(Network::new(self)?.param_count())
    }
}

#[derive(Debug, Clone)]
enum Layer {
    Dense {
        input: usize,
        output: usize,
        weight: usize,
        bias: usize,
    },
    Relu,
    Conv {
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        kernel: usize,
        weight: usize,
        bias: usize,
    },
    MaxPool {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flatten,
}

enum Cache {
    Input(Array2<f64>),
    Output(Array2<f64>),
    Cols(Array2<f64>),
    Argmax(Vec<usize>, usize),
    Nothing,
}

/// A compiled [`ModelSpec`]: layer list with offsets into the flat
/// parameter vector.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    params: usize,
}

impl Network {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let mut layers = Vec::new();
        let mut offset = 0usize;
        fn dense(layers: &mut Vec<Layer>, offset: &mut usize, input: usize, output: usize) {
            layers.push(Layer::Dense {
                input,
                output,
                weight: *offset,
                bias: *offset + input * output,
            });
            *offset += input * output + output;
        }
        match spec {
            ModelSpec::Mlp {
                input,
                hidden,
                classes,
            } => {
                if *input == 0 || *classes == 0 || hidden.iter().any(|&h| h == 0) {
                    return Err(FlError::InvalidArgument(format!("degenerate MLP {spec:?}")));
                }
                let mut prev = *input;
                for &h in hidden {
                    dense(&mut layers, &mut offset, prev, h);
                    layers.push(Layer::Relu);
                    prev = h;
                }
                dense(&mut layers, &mut offset, prev, *classes);
            }
            ModelSpec::Cnn {
                channels,
                height,
                width,
                filters,
                kernel,
                dense: hidden,
                classes,
            } => {
                if *kernel % 2 == 0
                    || height % 4 != 0
                    || width % 4 != 0
                    || [*channels, *height, *width, filters[0], filters[1], *hidden, *classes]
                        .contains(&0)
                {
                    return Err(FlError::InvalidArgument(format!(
                        "unsupported CNN {spec:?}: need odd kernel and sides divisible by 4"
                    )));
                }
                let (mut c, mut h, mut w) = (*channels, *height, *width);
                for &f in filters {
                    let k = *kernel;
                    layers.push(Layer::Conv {
                        channels: c,
                        height: h,
                        width: w,
                        filters: f,
                        kernel: k,
                        weight: offset,
                        bias: offset + f * c * k * k,
                    });
                    offset += f * c * k * k + f;
                    layers.push(Layer::Relu);
                    layers.push(Layer::MaxPool {
                        channels: f,
                        height: h,
                        width: w,
                    });
                    c = f;
                    h /= 2;
                    w /= 2;
                }
                layers.push(Layer::Flatten);
                dense(&mut layers, &mut offset, c * h * w, *hidden);
                layers.push(Layer::Relu);
                dense(&mut layers, &mut offset, *hidden, *classes);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            params: offset,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = stream_rng(seed, &[0x696e_6974]);
        let mut p = vec![0.0; self.params];
        for layer in &self.layers {
            let (start, len, fan_in, fan_out) = match *layer {
                Layer::Dense {
                    input,
                    output,
                    weight,
                    ..
                } => (weight, input * output, input, output),
                Layer::Conv {
                    channels,
                    filters,
                    kernel,
                    weight,
                    ..
                } => {
                    let area = kernel * kernel;
                    (weight, filters * channels * area, channels * area, filters * area)
                }
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p[start..start + len] {
                *v = rng.gen_range(-limit..=limit);
            }
        }
        ParamVector(p)
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.params {
            return Err(FlError::InvalidArgument(format!(
                "parameter vector has {} entries, model expects {}",
                params.len(),
                self.params
            )));
        }
        Ok(())
    }

    /// Logits for a batch `(rows, input_dim)`.
    pub fn logits(&self, params: &[f64], x: Array2<f64>) -> Array2<f64> {
        self.run_forward(params, x, None)
    }

    fn run_forward(
        &self,
        params: &[f64],
        mut x: Array2<f64>,
        mut caches: Option<&mut Vec<Cache>>,
    ) -> Array2<f64> {
        for layer in &self.layers {
            let (next, cache) = forward_layer(layer, params, x, caches.is_some());
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            x = next;
        }
        x
    }

    /// Mean cross-entropy over the batch and its gradient, written into `grad`
    /// (overwritten, not accumulated).
    pub(crate) fn loss_grad(
        &self,
        params: &[f64],
        x: Array2<f64>,
        labels: &[u8],
        grad: &mut [f64],
    ) -> f64 {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.run_forward(params, x, Some(&mut caches));
        let (losses, mut g) = softmax_cross_entropy(&logits, labels, true);
        let n = labels.len() as f64;
        g.mapv_inplace(|v| v / n);
        grad.iter_mut().for_each(|v| *v = 0.0);
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            g = backward_layer(layer, params, cache, g, grad);
        }
        losses.iter().sum::<f64>() / n
    }
}

/// Per-row cross-entropy and, when asked, `softmax - onehot`.
pub(crate) fn softmax_cross_entropy(
    logits: &Array2<f64>,
    labels: &[u8],
    with_grad: bool,
) -> (Vec<f64>, Array2<f64>) {
    let mut losses = Vec::with_capacity(labels.len());
    let mut grad = if with_grad {
        Array2::zeros(logits.raw_dim())
    } else {
        Array2::zeros((0, 0))
    };
    for (i, row) in logits.outer_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + z.ln();
        let y = labels[i] as usize;
        losses.push(lse - row[y]);
        if with_grad {
            let mut gr = grad.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                gr[j] = (v - lse).exp();
            }
            gr[y] -= 1.0;
        }
    }
    (losses, grad)
}

fn matrix<'a>(params: &'a [f64], offset: usize, rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), &params[offset..offset + rows * cols])
        .expect("layer layout matches parameter vector")
}

fn matrix_mut(grad: &mut [f64], offset: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut grad[offset..offset + rows * cols])
        .expect("layer layout matches gradient vector")
}

fn forward_layer(layer: &Layer, params: &[f64], x: Array2<f64>, keep: bool) -> (Array2<f64>, Cache) {
    match *layer {
        Layer::Dense {
            input,
            output,
            weight,
            bias,
        } => {
            let w = matrix(params, weight, output, input);
            let b = ArrayView1::from(&params[bias..bias + output]);
            let y = x.dot(&w.t()) + &b;
            (y, if keep { Cache::Input(x) } else { Cache::Nothing })
        }
        Layer::Relu => {
            let y = x.mapv_into(|v| v.max(0.0));
            let cache = if keep { Cache::Output(y.clone()) } else { Cache::Nothing };
            (y, cache)
        }
        Layer::Conv {
            channels,
            height,
            width,
            filters,
            kernel,
            weight,
            bias,
        } => {
            let batch = x.nrows();
            let hw = height * width;
            let cols = im2col(&x, channels, height, width, kernel);
            let w = matrix(params, weight, filters, channels * kernel * kernel);
            let b = ArrayView1::from(&params[bias..bias + filters]);
            let out = cols.dot(&w.t()) + &b;
            let mut y = Array2::zeros((batch, filters * hw));
            for bi in 0..batch {
                let block = out.slice(s![bi * hw..(bi + 1) * hw, ..]);
                let mut dst = y.row_mut(bi);
                for f in 0..filters {
                    dst.slice_mut(s![f * hw..(f + 1) * hw]).assign(&block.column(f));
                }
            }
            (y, if keep { Cache::Cols(cols) } else { Cache::Nothing })
        }
        Layer::MaxPool {
            channels,
            height,
            width,
        } => {
            let (oh, ow) = (height / 2, width / 2);
            let batch = x.nrows();
            let mut y = Array2::zeros((batch, channels * oh * ow));
            let mut arg = if keep {
                Vec::with_capacity(batch * channels * oh * ow)
            } else {
                Vec::new()
            };
            for bi in 0..batch {
                let src = x.row(bi);
                let mut dst = y.row_mut(bi);
                for c in 0..channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let base = c * height * width + 2 * oy * width + 2 * ox;
                            let mut best = base;
                            for cand in [base + 1, base + width, base + width + 1] {
                                if src[cand] > src[best] {
                                    best = cand;
                                }
                            }
                            dst[c * oh * ow + oy * ow + ox] = src[best];
                            if keep {
                                arg.push(best);
                            }
                        }
                    }
                }
            }
            let in_width = x.ncols();
            (y, if keep { Cache::Argmax(arg, in_width) } else { Cache::Nothing })
        }
        Layer::Flatten => (x, Cache::Nothing),
    }
}

fn backward_layer(
    layer: &Layer,
    params: &[f64],
    cache: Cache,
    g: Array2<f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    match (layer, cache) {
        (
            &Layer::Dense {
                input,
                output,
                weight,
                bias,
            },
            Cache::Input(x),
        ) => {
            matrix_mut(grad, weight, output, input).assign(&g.t().dot(&x));
            ArrayViewMut1::from(&mut grad[bias..bias + output]).assign(&g.sum_axis(Axis(0)));
            g.dot(&matrix(params, weight, output, input))
        }
        (Layer::Relu, Cache::Output(y)) => {
            let mut g = g;
            g.zip_mut_with(&y, |gv, &yv| {
                if yv <= 0.0 {
                    *gv = 0.0;
                }
            });
            g
        }
        (
            &Layer::Conv {
                channels,
                height,
                width,
                filters,
                kernel,
                weight,
                bias,
            },
            Cache::Cols(cols),
        ) => {
            let batch = g.nrows();
            let hw = height * width;
            let mut gm = Array2::zeros((batch * hw, filters));
            for bi in 0..batch {
                let src = g.row(bi);
                let mut block = gm.slice_mut(s![bi * hw..(bi + 1) * hw, ..]);
                for f in 0..filters {
                    block.column_mut(f).assign(&src.slice(s![f * hw..(f + 1) * hw]));
                }
            }
            let ckk = channels * kernel * kernel;
            matrix_mut(grad, weight, filters, ckk).assign(&gm.t().dot(&cols));
            ArrayViewMut1::from(&mut grad[bias..bias + filters]).assign(&gm.sum_axis(Axis(0)));
            let dcols = gm.dot(&matrix(params, weight, filters, ckk));
            col2im(&dcols, batch, channels, height, width, kernel)
        }
        (Layer::MaxPool { .. }, Cache::Argmax(arg, in_width)) => {
            let batch = g.nrows();
            let out_width = g.ncols();
            let mut dx = Array2::zeros((batch, in_width));
            for bi in 0..batch {
                let src = g.row(bi);
                let mut dst = dx.row_mut(bi);
                for (j, &v) in src.iter().enumerate() {
                    dst[arg[bi * out_width + j]] += v;
                }
            }
            dx
        }
        (Layer::Flatten, _) => g,
        _ => unreachable!("cache kind always matches its layer"),
    }
}

/// Rows are output pixels `(sample, y, x)`; columns are `(channel, ky, kx)`.
fn im2col(x: &Array2<f64>, channels: usize, height: usize, width: usize, kernel: usize) -> Array2<f64> {
    let batch = x.nrows();
    let pad = (kernel / 2) as isize;
    let hw = height * width;
    let ckk = channels * kernel * kernel;
    let mut cols = Array2::zeros((batch * hw, ckk));
    for bi in 0..batch {
        let src = x.row(bi);
        for oy in 0..height {
            for ox in 0..width {
                let mut row = cols.row_mut(bi * hw + oy * width + ox);
                for c in 0..channels {
                    for ky in 0..kernel {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= height as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= width as isize {
                                continue;
                            }
                            row[(c * kernel + ky) * kernel + kx] =
                                src[c * hw + iy as usize * width + ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    dcols: &Array2<f64>,
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
) -> Array2<f64> {
    let pad = (kernel / 2) as isize;
    let hw = height * width;
    let mut dx = Array2::zeros((batch, channels * hw));
    for bi in 0..batch {
        let mut dst = dx.row_mut(bi);
        for oy in 0..height {
            for ox in 0..width {
                let row = dcols.row(bi * hw + oy * width + ox);
                for c in 0..channels {
                    for ky in 0..kernel {
                        let iy = oy as isize + ky as isize - pad;
                        if iy < 0 || iy >= height as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = ox as isize + kx as isize - pad;
                            if ix < 0 || ix >= width as isize {
                                continue;
                            }
                            dst[c * hw + iy as usize * width + ix as usize] +=
                                row[(c * kernel + ky) * kernel + kx];
                        }
                    }
                }
            }
        }
    }
    dx
}
