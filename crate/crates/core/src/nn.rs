//! Small float64 neural-network stack: layers with hand-written backward
//! passes, MAE and sparse categorical cross-entropy, Adam, and SARM
//! checkpoints.
//!
//! Tensors are NHWC. A [`Network`] keeps all parameters in one flat vector;
//! each layer owns a contiguous slice of it. Forward and backward run one
//! sample at a time (in parallel across the minibatch) and per-sample
//! gradients are summed in sample order, so results do not depend on the
//! worker count.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Prng;
use crate::par;

const INIT_STREAM: u64 = 0x494e_4954;
const DROPOUT_KEY: u64 = 0x4452_4f50_4f55_5400;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a cached train-mode forward pass")]
    StaleCache,
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("invalid layer: {0}")]
    InvalidSpec(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn mismatch(msg: impl Into<String>) -> NnError {
    NnError::ShapeMismatch(msg.into())
}

/// Per-sample shape (height, width, channels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn flat(n: usize) -> Self {
        Self::new(1, 1, n)
    }

    pub const fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// Batch of `n` samples of one [`Shape`], NHWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, shape: Shape) -> Self {
        Self {
            n,
            shape,
            data: vec![0.0; n * shape.len()],
        }
    }

    pub fn from_vec(n: usize, shape: Shape, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != n * shape.len() {
            return Err(mismatch(format!(
                "{} values for {n} samples of {shape}",
                data.len()
            )));
        }
        Ok(Self { n, shape, data })
    }

    /// Stacks equally sized samples.
    pub fn stack<S: AsRef<[f64]>>(shape: Shape, samples: &[S]) -> Result<Self, NnError> {
        let mut data = Vec::with_capacity(samples.len() * shape.len());
        for s in samples {
            let s = s.as_ref();
            if s.len() != shape.len() {
                return Err(mismatch(format!("sample of {} values, expected {shape}", s.len())));
            }
            data.extend_from_slice(s);
        }
        Ok(Self {
            n: samples.len(),
            shape,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.shape.h, self.shape.w, self.shape.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let l = self.shape.len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn get(&self, n: usize, y: usize, x: usize, c: usize) -> f64 {
        let s = self.shape;
        self.data[((n * s.h + y) * s.w + x) * s.c + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn from_samples(shape: Shape, samples: Vec<Vec<f64>>) -> Self {
        let n = samples.len();
        Self {
            n,
            shape,
            data: samples.concat(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// How a residual connection combines its input `x` with its body `f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualScale {
    /// `s * x + f(x)`
    Skip(f64),
    /// `x + s * f(x)`
    Branch(f64),
}

impl Default for ResidualScale {
    fn default() -> Self {
        Self::Skip(1.0)
    }
}

impl ResidualScale {
    fn factors(self) -> (f64, f64) {
        match self {
            Self::Skip(s) => (s, 1.0),
            Self::Branch(s) => (1.0, s),
        }
    }
}

/// Serializable layer description; parameters live in the [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel: [usize; 2],
        filters: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
    LeakyRelu {
        alpha: f64,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    SpatialDropout2d {
        rate: f64,
    },
    PixelShuffle {
        factor: usize,
    },
    Flatten,
    Reshape {
        shape: Shape,
    },
    /// conv 3x3 -> ReLU -> conv 3x3, combined with the input per `scale`.
    ResidualBlock {
        filters: usize,
        scale: ResidualScale,
    },
    /// Arbitrary body with an identity-shaped skip around it.
    Residual {
        body: Vec<LayerSpec>,
        scale: ResidualScale,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv(k: usize, filters: usize) -> Self {
        Self::Conv2d {
            kernel: [k, k],
            filters,
            stride: 1,
            padding: Padding::Same,
        }
    }

    pub fn conv_strided(k: usize, filters: usize, stride: usize) -> Self {
        Self::Conv2d {
            kernel: [k, k],
            filters,
            stride,
            padding: Padding::Same,
        }
    }

    pub fn max_pool() -> Self {
        Self::MaxPool2d { size: 2, stride: 2 }
    }
}

#[derive(Debug, Clone)]
struct Layer {
    kind: Kind,
    input: Shape,
    output: Shape,
    n_params: usize,
}

#[derive(Debug, Clone)]
enum Kind {
    Conv {
        kh: usize,
        kw: usize,
        filters: usize,
        stride: usize,
        pad_top: usize,
        pad_left: usize,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
    LeakyRelu {
        alpha: f64,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    SpatialDropout {
        rate: f64,
    },
    PixelShuffle {
        factor: usize,
    },
    Flatten,
    Reshape,
    Residual {
        body: Vec<Layer>,
        scale: ResidualScale,
    },
    Softmax,
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Input(Vec<f64>),
    Argmax(Vec<usize>),
    Mask(Vec<f64>),
    Output(Vec<f64>),
    Residual(Vec<Cache>),
}

fn check_rate(rate: f64) -> Result<(), NnError> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(NnError::InvalidSpec(format!("dropout rate {rate} not in [0, 1)")))
    }
}

fn conv_geometry(n: usize, k: usize, s: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(n);
            Some((out, total / 2))
        }
        Padding::Valid => (n >= k).then(|| ((n - k) / s + 1, 0)),
    }
}

impl Layer {
    fn build(spec: &LayerSpec, input: Shape) -> Result<Self, NnError> {
        let layer = |kind, output: Shape, n_params| Layer {
            kind,
            input,
            output,
            n_params,
        };
        Ok(match spec {
            LayerSpec::Conv2d {
                kernel: [kh, kw],
                filters,
                stride,
                padding,
            } => {
                let (kh, kw, filters, stride) = (*kh, *kw, *filters, *stride);
                if kh == 0 || kw == 0 || filters == 0 || stride == 0 {
                    return Err(NnError::InvalidSpec(format!("bad conv spec {spec:?}")));
                }
                let (oh, pad_top) = conv_geometry(input.h, kh, stride, *padding)
                    .ok_or_else(|| mismatch(format!("{kh}x{kw} valid conv on {input}")))?;
                let (ow, pad_left) = conv_geometry(input.w, kw, stride, *padding)
                    .ok_or_else(|| mismatch(format!("{kh}x{kw} valid conv on {input}")))?;
                let k = kh * kw * input.c;
                layer(
                    Kind::Conv {
                        kh,
                        kw,
                        filters,
                        stride,
                        pad_top,
                        pad_left,
                    },
                    Shape::new(oh, ow, filters),
                    k * filters + filters,
                )
            }
            LayerSpec::MaxPool2d { size, stride } => {
                if *size == 0 || *stride == 0 || input.h < *size || input.w < *size {
                    return Err(mismatch(format!("{size}x{size} pool on {input}")));
                }
                let out = Shape::new(
                    (input.h - size) / stride + 1,
                    (input.w - size) / stride + 1,
                    input.c,
                );
                layer(
                    Kind::MaxPool {
                        size: *size,
                        stride: *stride,
                    },
                    out,
                    0,
                )
            }
            LayerSpec::Dense { units } => {
                if *units == 0 {
                    return Err(NnError::InvalidSpec("dense layer with zero units".into()));
                }
                layer(
                    Kind::Dense { units: *units },
                    Shape::flat(*units),
                    input.len() * units + units,
                )
            }
            LayerSpec::LeakyRelu { alpha } => layer(Kind::LeakyRelu { alpha: *alpha }, input, 0),
            LayerSpec::Relu => layer(Kind::Relu, input, 0),
            LayerSpec::Dropout { rate } => {
                check_rate(*rate)?;
                layer(Kind::Dropout { rate: *rate }, input, 0)
            }
            LayerSpec::SpatialDropout2d { rate } => {
                check_rate(*rate)?;
                layer(Kind::SpatialDropout { rate: *rate }, input, 0)
            }
            LayerSpec::PixelShuffle { factor } => {
                let r = *factor;
                if r == 0 || input.c % (r * r) != 0 {
                    return Err(mismatch(format!("pixel shuffle x{r} on {input}")));
                }
                layer(
                    Kind::PixelShuffle { factor: r },
                    Shape::new(input.h * r, input.w * r, input.c / (r * r)),
                    0,
                )
            }
            LayerSpec::Flatten => layer(Kind::Flatten, Shape::flat(input.len()), 0),
            LayerSpec::Reshape { shape } => {
                if shape.len() != input.len() {
                    return Err(mismatch(format!("reshape {input} to {shape}")));
                }
                layer(Kind::Reshape, *shape, 0)
            }
            LayerSpec::ResidualBlock { filters, scale } => {
                let body = [LayerSpec::conv(3, *filters), LayerSpec::Relu, LayerSpec::conv(3, *filters)];
                Self::build_residual(&body, *scale, input)?
            }
            LayerSpec::Residual { body, scale } => Self::build_residual(body, *scale, input)?,
            LayerSpec::Softmax => layer(Kind::Softmax, input, 0),
        })
    }

    fn build_residual(body: &[LayerSpec], scale: ResidualScale, input: Shape) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(body.len());
        let mut s = input;
        for spec in body {
            let l = Layer::build(spec, s)?;
            s = l.output;
            layers.push(l);
        }
        if s != input {
            return Err(mismatch(format!("residual body maps {input} to {s}")));
        }
        let n_params = layers.iter().map(|l| l.n_params).sum();
        Ok(Layer {
            kind: Kind::Residual {
                body: layers,
                scale,
            },
            input,
            output: input,
            n_params,
        })
    }

    /// Kaiming-normal weights (variance 2 / fan_in), zero biases.
    fn init(&self, p: &mut [f64], rng: &mut Prng) {
        match &self.kind {
            Kind::Conv { kh, kw, filters, .. } => {
                let fan_in = kh * kw * self.input.c;
                let std = (2.0 / fan_in as f64).sqrt();
                let (w, b) = p.split_at_mut(fan_in * filters);
                w.iter_mut().for_each(|v| *v = std * rng.normal());
                b.fill(0.0);
            }
            Kind::Dense { units } => {
                let fan_in = self.input.len();
                let std = (2.0 / fan_in as f64).sqrt();
                let (w, b) = p.split_at_mut(fan_in * units);
                w.iter_mut().for_each(|v| *v = std * rng.normal());
                b.fill(0.0);
            }
            Kind::Residual { body, .. } => {
                let mut at = 0;
                for l in body {
                    l.init(&mut p[at..at + l.n_params], rng);
                    at += l.n_params;
                }
            }
            _ => {}
        }
    }

    fn forward(&self, p: &[f64], x: &[f64], train: bool, rng: &mut Prng) -> (Vec<f64>, Cache) {
        let keep = |v: &[f64]| if train { Cache::Input(v.to_vec()) } else { Cache::None };
        match &self.kind {
            Kind::Conv { .. } => (self.conv_forward(p, x), keep(x)),
            Kind::MaxPool { size, stride } => {
                let (y, arg) = maxpool_forward(x, self.input, self.output, *size, *stride);
                (y, if train { Cache::Argmax(arg) } else { Cache::None })
            }
            Kind::Dense { units } => {
                let f = self.input.len();
                let (w, b) = p.split_at(f * units);
                let mut y = b.to_vec();
                gemm(1, f, *units, x, false, w, false, &mut y, 1.0);
                (y, keep(x))
            }
            Kind::LeakyRelu { alpha } => (
                x.iter().map(|&z| if z >= 0.0 { z } else { alpha * z }).collect(),
                keep(x),
            ),
            Kind::Relu => (x.iter().map(|&z| z.max(0.0)).collect(), keep(x)),
            Kind::Dropout { rate } | Kind::SpatialDropout { rate } if !train || *rate == 0.0 => {
                (x.to_vec(), Cache::None)
            }
            Kind::Dropout { rate } => {
                let scale = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.bernoulli(*rate) { 0.0 } else { scale })
                    .collect();
                (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), Cache::Mask(mask))
            }
            Kind::SpatialDropout { rate } => {
                let scale = 1.0 / (1.0 - rate);
                let c = self.input.c;
                let mask: Vec<f64> = (0..c)
                    .map(|_| if rng.bernoulli(*rate) { 0.0 } else { scale })
                    .collect();
                let y = x.iter().enumerate().map(|(i, a)| a * mask[i % c]).collect();
                (y, Cache::Mask(mask))
            }
            Kind::PixelShuffle { factor } => (pixel_shuffle(x, self.input, *factor, false), Cache::None),
            Kind::Flatten | Kind::Reshape => (x.to_vec(), Cache::None),
            Kind::Residual { body, scale } => {
                let (skip, branch) = scale.factors();
                let mut h = x.to_vec();
                let mut caches = Vec::with_capacity(body.len());
                let mut at = 0;
                for l in body {
                    let (y, c) = l.forward(&p[at..at + l.n_params], &h, train, rng);
                    at += l.n_params;
                    h = y;
                    caches.push(c);
                }
                let y = x.iter().zip(&h).map(|(a, f)| skip * a + branch * f).collect();
                (y, if train { Cache::Residual(caches) } else { Cache::None })
            }
            Kind::Softmax => {
                let y = softmax(x);
                let c = if train { Cache::Output(y.clone()) } else { Cache::None };
                (y, c)
            }
        }
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    fn backward(&self, p: &[f64], g: &mut [f64], cache: &Cache, dy: &[f64]) -> Vec<f64> {
        match (&self.kind, cache) {
            (Kind::Conv { .. }, Cache::Input(x)) => self.conv_backward(p, g, x, dy),
            (Kind::MaxPool { .. }, Cache::Argmax(arg)) => {
                let mut dx = vec![0.0; self.input.len()];
                for (&src, &d) in arg.iter().zip(dy) {
                    dx[src] += d;
                }
                dx
            }
            (Kind::Dense { units }, Cache::Input(x)) => {
                let f = self.input.len();
                let (w, _) = p.split_at(f * units);
                let (gw, gb) = g.split_at_mut(f * units);
                gemm(f, 1, *units, x, true, dy, false, gw, 1.0);
                gb.iter_mut().zip(dy).for_each(|(a, d)| *a += d);
                let mut dx = vec![0.0; f];
                gemm(1, *units, f, dy, false, w, true, &mut dx, 0.0);
                dx
            }
            (Kind::LeakyRelu { alpha }, Cache::Input(x)) => x
                .iter()
                .zip(dy)
                .map(|(&z, &d)| if z >= 0.0 { d } else { alpha * d })
                .collect(),
            (Kind::Relu, Cache::Input(x)) => x
                .iter()
                .zip(dy)
                .map(|(&z, &d)| if z > 0.0 { d } else { 0.0 })
                .collect(),
            (Kind::Dropout { .. }, Cache::Mask(m)) => dy.iter().zip(m).map(|(d, m)| d * m).collect(),
            (Kind::SpatialDropout { .. }, Cache::Mask(m)) => {
                let c = self.input.c;
                dy.iter().enumerate().map(|(i, d)| d * m[i % c]).collect()
            }
            (Kind::Dropout { .. } | Kind::SpatialDropout { .. }, Cache::None) => dy.to_vec(),
            (Kind::PixelShuffle { factor }, _) => pixel_shuffle(dy, self.input, *factor, true),
            (Kind::Flatten | Kind::Reshape, _) => dy.to_vec(),
            (Kind::Residual { body, scale }, Cache::Residual(caches)) => {
                let (skip, branch) = scale.factors();
                let mut offsets = Vec::with_capacity(body.len());
                let mut at = 0;
                for l in body {
                    offsets.push(at);
                    at += l.n_params;
                }
                let mut d: Vec<f64> = dy.iter().map(|v| branch * v).collect();
                for ((l, c), &o) in body.iter().zip(caches).zip(&offsets).rev() {
                    d = l.backward(&p[o..o + l.n_params], &mut g[o..o + l.n_params], c, &d);
                }
                d.iter().zip(dy).map(|(b, v)| b + skip * v).collect()
            }
            (Kind::Softmax, Cache::Output(y)) => {
                let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                y.iter().zip(dy).map(|(yi, di)| yi * (di - dot)).collect()
            }
            _ => unreachable!("cache kind always matches its layer"),
        }
    }

    fn conv_dims(&self) -> (usize, usize, usize, usize, usize, usize, usize) {
        match self.kind {
            Kind::Conv {
                kh,
                kw,
                filters,
                stride,
                pad_top,
                pad_left,
                ..
            } => (kh, kw, filters, stride, pad_top, pad_left, kh * kw * self.input.c),
            _ => unreachable!(),
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (kh, kw, _, stride, pt, pl, k) = self.conv_dims();
        let (i, o) = (self.input, self.output);
        let mut cols = vec![0.0; o.h * o.w * k];
        for oy in 0..o.h {
            for ox in 0..o.w {
                let row = &mut cols[(oy * o.w + ox) * k..(oy * o.w + ox + 1) * k];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= i.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= i.w as isize {
                            continue;
                        }
                        let src = (iy as usize * i.w + ix as usize) * i.c;
                        let dst = (ky * kw + kx) * i.c;
                        row[dst..dst + i.c].copy_from_slice(&x[src..src + i.c]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (kh, kw, _, stride, pt, pl, k) = self.conv_dims();
        let (i, o) = (self.input, self.output);
        let mut dx = vec![0.0; i.len()];
        for oy in 0..o.h {
            for ox in 0..o.w {
                let row = &cols[(oy * o.w + ox) * k..(oy * o.w + ox + 1) * k];
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pt as isize;
                    if iy < 0 || iy >= i.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pl as isize;
                        if ix < 0 || ix >= i.w as isize {
                            continue;
                        }
                        let dst = (iy as usize * i.w + ix as usize) * i.c;
                        let src = (ky * kw + kx) * i.c;
                        for c in 0..i.c {
                            dx[dst + c] += row[src + c];
                        }
                    }
                }
            }
        }
        dx
    }

    fn conv_forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let (_, _, f, _, _, _, k) = self.conv_dims();
        let m = self.output.h * self.output.w;
        let (w, b) = p.split_at(k * f);
        let cols = self.im2col(x);
        let mut y: Vec<f64> = (0..m).flat_map(|_| b.iter().copied()).collect();
        gemm(m, k, f, &cols, false, w, false, &mut y, 1.0);
        y
    }

    fn conv_backward(&self, p: &[f64], g: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let (_, _, f, _, _, _, k) = self.conv_dims();
        let m = self.output.h * self.output.w;
        let (w, _) = p.split_at(k * f);
        let (gw, gb) = g.split_at_mut(k * f);
        let cols = self.im2col(x);
        gemm(k, m, f, &cols, true, dy, false, gw, 1.0);
        for row in dy.chunks_exact(f) {
            gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
        }
        let mut dcols = vec![0.0; m * k];
        gemm(m, f, k, dy, false, w, true, &mut dcols, 0.0);
        self.col2im(&dcols)
    }
}

/// `c = a * b + beta * c` for row-major operands; `a` is `m x k` (stored
/// `k x m` when `ta`), `b` is `k x n` (stored `n x k` when `tb`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n, and m*n
    // elements of the three slices, whose lengths are asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn maxpool_forward(x: &[f64], i: Shape, o: Shape, size: usize, stride: usize) -> (Vec<f64>, Vec<usize>) {
    let mut y = vec![0.0; o.len()];
    let mut arg = vec![0; o.len()];
    for oy in 0..o.h {
        for ox in 0..o.w {
            for c in 0..i.c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for dy in 0..size {
                    for dx in 0..size {
                        let at = ((oy * stride + dy) * i.w + ox * stride + dx) * i.c + c;
                        if x[at] > best {
                            best = x[at];
                            best_at = at;
                        }
                    }
                }
                let out = (oy * o.w + ox) * o.c + c;
                y[out] = best;
                arg[out] = best_at;
            }
        }
    }
    (y, arg)
}

/// Depth-to-space: output `(y*r + dy, x*r + dx, c)` reads input channel
/// `(dy*r + dx)*C + c`. With `inverse` the permutation runs backwards.
fn pixel_shuffle(v: &[f64], input: Shape, r: usize, inverse: bool) -> Vec<f64> {
    let c_out = input.c / (r * r);
    let w_out = input.w * r;
    let mut out = vec![0.0; v.len()];
    for y in 0..input.h {
        for x in 0..input.w {
            for dy in 0..r {
                for dx in 0..r {
                    for c in 0..c_out {
                        let src = (y * input.w + x) * input.c + (dy * r + dx) * c_out + c;
                        let dst = ((y * r + dy) * w_out + x * r + dx) * c_out + c;
                        if inverse {
                            out[src] = v[dst];
                        } else {
                            out[dst] = v[src];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

/// Architecture of a [`Network`] without its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl NetworkSpec {
    /// Shapes after every top-level layer, starting with the input.
    pub fn shape_trace(&self) -> Result<Vec<Shape>, NnError> {
        let mut shapes = vec![self.input];
        for spec in &self.layers {
            let l = Layer::build(spec, *shapes.last().unwrap())?;
            shapes.push(l.output);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape, NnError> {
        Ok(*self.shape_trace()?.last().unwrap())
    }

    pub fn param_count(&self) -> Result<usize, NnError> {
        let mut s = self.input;
        let mut n = 0;
        for spec in &self.layers {
            let l = Layer::build(spec, s)?;
            n += l.n_params;
            s = l.output;
        }
        Ok(n)
    }
}

struct BatchCache {
    upto: usize,
    samples: Vec<Vec<Cache>>,
}

/// Ordered layer stack with its flat parameter and gradient vectors.
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    grads: Vec<f64>,
    mode: Mode,
    passes: u64,
    cache: Option<BatchCache>,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            offsets: self.offsets.clone(),
            params: self.params.clone(),
            grads: self.grads.clone(),
            mode: self.mode,
            passes: self.passes,
            cache: None,
        }
    }
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("spec", &self.spec)
            .field("params", &self.params.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl Network {
    /// Builds and initializes from `seed`. Starts in train mode.
    pub fn new(input: Shape, specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let spec = NetworkSpec {
            input,
            layers: specs,
            seed,
        };
        let mut net = Self::from_spec(spec, None)?;
        let mut rng = Prng::with_stream(seed, INIT_STREAM);
        for (l, &o) in net.layers.iter().zip(&net.offsets) {
            l.init(&mut net.params[o..o + l.n_params], &mut rng);
        }
        Ok(net)
    }

    /// Rebuilds from a spec and, optionally, its parameters.
    pub fn from_spec(spec: NetworkSpec, params: Option<Vec<f64>>) -> Result<Self, NnError> {
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut offsets = Vec::with_capacity(spec.layers.len());
        let mut s = spec.input;
        let mut total = 0;
        for ls in &spec.layers {
            let l = Layer::build(ls, s)?;
            s = l.output;
            offsets.push(total);
            total += l.n_params;
            layers.push(l);
        }
        let params = match params {
            Some(p) if p.len() == total => p,
            Some(p) => {
                return Err(mismatch(format!("{} parameters for a network of {total}", p.len())))
            }
            None => vec![0.0; total],
        };
        Ok(Self {
            spec,
            layers,
            offsets,
            grads: vec![0.0; total],
            params,
            mode: Mode::Train,
            passes: 0,
            cache: None,
        })
    }

    /// `self` followed by `next`; parameters are copied, not re-initialized.
    pub fn then(&self, next: &Network) -> Result<Network, NnError> {
        if self.output_shape() != next.input_shape() {
            return Err(mismatch(format!(
                "cannot feed {} into a network expecting {}",
                self.output_shape(),
                next.input_shape()
            )));
        }
        let spec = NetworkSpec {
            input: self.input_shape(),
            layers: self.spec.layers.iter().chain(&next.spec.layers).cloned().collect(),
            seed: self.spec.seed,
        };
        let params = self.params.iter().chain(&next.params).copied().collect();
        let mut net = Self::from_spec(spec, Some(params))?;
        net.mode = self.mode;
        Ok(net)
    }

    /// Splits before top-level layer `at`, the inverse of [`Network::then`].
    pub fn split_at(&self, at: usize) -> Result<(Network, Network), NnError> {
        if at > self.layers.len() {
            return Err(NnError::InvalidSpec(format!(
                "split at {at} in a network of {} layers",
                self.layers.len()
            )));
        }
        let cut = self.offsets.get(at).copied().unwrap_or(self.params.len());
        let head = NetworkSpec {
            input: self.spec.input,
            layers: self.spec.layers[..at].to_vec(),
            seed: self.spec.seed,
        };
        let tail = NetworkSpec {
            input: if at == 0 { self.spec.input } else { self.layers[at - 1].output },
            layers: self.spec.layers[at..].to_vec(),
            seed: self.spec.seed,
        };
        let mut a = Self::from_spec(head, Some(self.params[..cut].to_vec()))?;
        let mut b = Self::from_spec(tail, Some(self.params[cut..].to_vec()))?;
        a.mode = self.mode;
        b.mode = self.mode;
        Ok((a, b))
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.spec.input, |l| l.output)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill(0.0);
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.cache = None;
    }

    /// Dropout masks for forward pass `k` come from a stream keyed by `k`;
    /// rewinding the counter replays the same masks.
    pub fn pass_counter(&self) -> u64 {
        self.passes
    }

    pub fn set_pass_counter(&mut self, k: u64) {
        self.passes = k;
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last().map(|l| &l.kind), Some(Kind::Softmax))
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4, NnError> {
        self.forward_upto(x, self.layers.len())
    }

    /// Forward pass stopping before a trailing softmax (if any).
    pub fn forward_logits(&mut self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let upto = self.layers.len() - usize::from(self.ends_with_softmax());
        self.forward_upto(x, upto)
    }

    fn forward_upto(&mut self, x: &Tensor4, upto: usize) -> Result<Tensor4, NnError> {
        if x.shape() != self.input_shape() {
            return Err(mismatch(format!(
                "input {} but network expects {}",
                x.shape(),
                self.input_shape()
            )));
        }
        let train = self.mode == Mode::Train;
        let pass = self.passes;
        self.passes += 1;
        let seed = self.spec.seed ^ DROPOUT_KEY;
        let layers = &self.layers[..upto];
        let offsets = &self.offsets;
        let params = &self.params;
        let results = par::map_range(0..x.n(), |s| {
            let mut rng = Prng::with_stream(seed, (pass << 24) | s as u64);
            let mut h = x.sample(s).to_vec();
            let mut caches = Vec::with_capacity(if train { layers.len() } else { 0 });
            for (l, &o) in layers.iter().zip(offsets) {
                let (y, c) = l.forward(&params[o..o + l.n_params], &h, train, &mut rng);
                h = y;
                if train {
                    caches.push(c);
                }
            }
            (h, caches)
        });
        let out_shape = layers.last().map_or(self.spec.input, |l| l.output);
        let (outs, caches): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.cache = train.then_some(BatchCache {
            upto,
            samples: caches,
        });
        Ok(Tensor4::from_samples(out_shape, outs))
    }

    /// Backpropagates through the layers run by the last train-mode forward
    /// pass, adding into the gradient buffer. Consumes the cache.
    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4, NnError> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        let layers = &self.layers[..cache.upto];
        let out = layers.last().map_or(self.spec.input, |l| l.output);
        if dy.shape() != out || dy.n() != cache.samples.len() {
            return Err(mismatch(format!(
                "upstream gradient {}x{} but forward produced {}x{}",
                dy.n(),
                dy.shape(),
                cache.samples.len(),
                out
            )));
        }
        let offsets = &self.offsets;
        let params = &self.params;
        let total = self.params.len();
        let results = par::map_range(0..dy.n(), |s| {
            let mut g = vec![0.0; total];
            let mut d = dy.sample(s).to_vec();
            for ((l, c), &o) in layers.iter().zip(&cache.samples[s]).zip(offsets).rev() {
                d = l.backward(&params[o..o + l.n_params], &mut g[o..o + l.n_params], c, &d);
            }
            (d, g)
        });
        let mut dxs = Vec::with_capacity(results.len());
        for (d, g) in results {
            self.grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            dxs.push(d);
        }
        Ok(Tensor4::from_samples(self.input_shape(), dxs))
    }
}

/// Mean absolute error over every element of the batch and its gradient
/// `sign(pred - target) / count` (zero at ties).
pub fn mae_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4), NnError> {
    if pred.dims() != target.dims() {
        return Err(mismatch(format!("pred {:?} vs target {:?}", pred.dims(), target.dims())));
    }
    let count = pred.data.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / count
            } else if d < 0.0 {
                -1.0 / count
            } else {
                0.0
            }
        })
        .collect();
    Ok((
        loss / count,
        Tensor4 {
            n: pred.n,
            shape: pred.shape,
            data: grad,
        },
    ))
}

/// Batch-mean sparse categorical cross-entropy on logits, with gradient
/// `(softmax(logits) - onehot(label)) / batch`.
pub fn scce_loss(logits: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4), NnError> {
    if labels.len() != logits.n() {
        return Err(mismatch(format!("{} labels for {} samples", labels.len(), logits.n())));
    }
    let k = logits.shape().len();
    let n = logits.n() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.data.len());
    for (s, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(NnError::BadLabel { label, classes: k });
        }
        let z = logits.sample(s);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[label];
        for (i, &zi) in z.iter().enumerate() {
            let p = (zi - lse).exp();
            grad.push((p - f64::from(u8::from(i == label))) / n);
        }
    }
    Ok((
        loss / n,
        Tensor4 {
            n: logits.n,
            shape: logits.shape,
            data: grad,
        },
    ))
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(mismatch(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// One step on a network's current gradients.
    pub fn step_network(&mut self, net: &mut Network) -> Result<(), NnError> {
        let grads = std::mem::take(&mut net.grads);
        let r = self.step(&mut net.params, &grads);
        net.grads = grads;
        r
    }
}

pub const SARM_MAGIC: &[u8; 4] = b"SARM";
pub const SARM_VERSION: u32 = 1;

/// Named networks plus free-form JSON metadata.
///
/// Layout (little-endian): `b"SARM" | u32 version | u32 meta_len | meta JSON
/// | u32 sections | per section: u32 name_len | name | u32 spec_len | spec
/// JSON | u64 n_params | f64 x n_params` followed by `u32 crc32` of every
/// preceding byte.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub sections: Vec<(String, Network)>,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            sections: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, net: &Network) -> Self {
        self.sections.push((name.to_string(), net.clone()));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Network> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn take(&mut self, name: &str) -> Option<Network> {
        let i = self.sections.iter().position(|(n, _)| n == name)?;
        Some(self.sections.remove(i).1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        fn put_blob(buf: &mut Vec<u8>, b: &[u8]) {
            buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
            buf.extend_from_slice(b);
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(SARM_MAGIC);
        buf.extend_from_slice(&SARM_VERSION.to_le_bytes());
        put_blob(&mut buf, &serde_json::to_vec(&self.metadata).expect("json value"));
        buf.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, net) in &self.sections {
            put_blob(&mut buf, name.as_bytes());
            put_blob(&mut buf, &serde_json::to_vec(net.spec()).expect("spec serializes"));
            buf.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
            for p in &net.params {
                buf.extend_from_slice(&p.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        struct Reader<'a> {
            b: &'a [u8],
            at: usize,
        }
        impl<'a> Reader<'a> {
            fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
                let end = self
                    .at
                    .checked_add(n)
                    .filter(|&e| e <= self.b.len())
                    .ok_or_else(|| NnError::Format("truncated checkpoint".into()))?;
                let s = &self.b[self.at..end];
                self.at = end;
                Ok(s)
            }
            fn u32(&mut self) -> Result<u32, NnError> {
                Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
            }
            fn blob(&mut self) -> Result<&'a [u8], NnError> {
                let n = self.u32()? as usize;
                self.take(n)
            }
        }
        if bytes.len() < 12 || &bytes[..4] != SARM_MAGIC {
            return Err(NnError::Format("not a SARM checkpoint".into()));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        let mut r = Reader { b: body, at: 4 };
        let version = r.u32()?;
        if version != SARM_VERSION {
            return Err(NnError::Format(format!("unsupported SARM version {version}")));
        }
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(NnError::Checksum);
        }
        let bad_json = |e: serde_json::Error| NnError::Format(e.to_string());
        let metadata = serde_json::from_slice(r.blob()?).map_err(bad_json)?;
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name = String::from_utf8(r.blob()?.to_vec())
                .map_err(|_| NnError::Format("section name is not UTF-8".into()))?;
            let spec: NetworkSpec = serde_json::from_slice(r.blob()?).map_err(bad_json)?;
            let n = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| NnError::Format("bad size".into()))?)?;
            let params = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let mut net = Network::from_spec(spec, Some(params))?;
            net.set_mode(Mode::Infer);
            sections.push((name, net));
        }
        if r.at != body.len() {
            return Err(NnError::Format("trailing bytes in checkpoint".into()));
        }
        Ok(Self { metadata, sections })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: Vec<f64>) -> Tensor4 {
        Tensor4::from_vec(1, shape, data).unwrap()
    }

    fn random_tensor(n: usize, shape: Shape, p: &mut Prng) -> Tensor4 {
        Tensor4::from_vec(n, shape, (0..n * shape.len()).map(|_| p.normal()).collect()).unwrap()
    }

    #[test]
    fn identity_conv() {
        let s = Shape::new(4, 5, 3);
        let mut net = Network::new(s, vec![LayerSpec::conv(1, 3)], 0).unwrap();
        let p = net.params_mut();
        p.fill(0.0);
        for c in 0..3 {
            p[c * 3 + c] = 1.0;
        }
        let x = random_tensor(2, s, &mut Prng::new(1));
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    /// Direct nested-loop cross-correlation with "same" zero padding.
    fn conv_oracle(x: &Tensor4, w: &[f64], b: &[f64], k: usize, f: usize, stride: usize) -> Vec<f64> {
        let (n, h, wd, c) = x.dims();
        let oh = h.div_ceil(stride);
        let ow = wd.div_ceil(stride);
        let pt = (((oh - 1) * stride + k).saturating_sub(h)) / 2;
        let pl = (((ow - 1) * stride + k).saturating_sub(wd)) / 2;
        let mut out = Vec::new();
        for s in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for o in 0..f {
                        let mut acc = b[o];
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pt as isize;
                                let ix = (ox * stride + kx) as isize - pl as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                for ci in 0..c {
                                    acc += x.get(s, iy as usize, ix as usize, ci)
                                        * w[((ky * k + kx) * c + ci) * f + o];
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut p = Prng::new(2);
        for (k, stride) in [(3, 1), (5, 2)] {
            let s = Shape::new(7, 6, 3);
            let mut net = Network::new(s, vec![LayerSpec::conv_strided(k, 4, stride)], 3).unwrap();
            net.params_mut().iter_mut().for_each(|v| *v = p.normal());
            let x = random_tensor(2, s, &mut p);
            let y = net.forward(&x).unwrap();
            let kk = k * k * 3 * 4;
            let (w, b) = net.params().split_at(kk);
            let want = conv_oracle(&x, w, b, k, 4, stride);
            assert_eq!(y.data().len(), want.len());
            for (a, e) in y.data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn maxpool_basics() {
        let mut net = Network::new(Shape::new(2, 2, 1), vec![LayerSpec::max_pool()], 0).unwrap();
        let y = net.forward(&t(Shape::new(2, 2, 1), vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let dx = net.backward(&t(Shape::new(1, 1, 1), vec![1.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 0.0, 1.0]);
        // Ties go to the first position in row-major order.
        net.forward(&t(Shape::new(2, 2, 1), vec![5.0, 1.0, 5.0, 5.0])).unwrap();
        let dx = net.backward(&t(Shape::new(1, 1, 1), vec![2.0])).unwrap();
        assert_eq!(dx.data(), &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn leaky_relu_slope() {
        let s = Shape::flat(3);
        let mut net = Network::new(s, vec![LayerSpec::LeakyRelu { alpha: 0.2 }], 0).unwrap();
        let y = net.forward(&t(s, vec![-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[-0.2, 0.0, 2.0]);
    }

    #[test]
    fn pixel_shuffle_ordering() {
        let mut net =
            Network::new(Shape::new(1, 1, 4), vec![LayerSpec::PixelShuffle { factor: 2 }], 0).unwrap();
        let y = net.forward(&t(Shape::new(1, 1, 4), vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 2, 1));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let mut p = Prng::new(5);
        let s = Shape::new(3, 2, 8);
        let x = random_tensor(1, s, &mut p);
        let fwd = pixel_shuffle(x.data(), s, 2, false);
        assert_eq!(pixel_shuffle(&fwd, s, 2, true), x.data());
    }

    #[test]
    fn softmax_is_a_distribution() {
        let mut p = Prng::new(6);
        for _ in 0..50 {
            let z: Vec<f64> = (0..5).map(|_| 30.0 * p.normal()).collect();
            let y = softmax(&z);
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(y.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn shape_errors() {
        let s = Shape::new(4, 4, 2);
        assert!(matches!(
            Network::new(s, vec![LayerSpec::Reshape { shape: Shape::new(3, 3, 1) }], 0),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(Network::new(s, vec![LayerSpec::PixelShuffle { factor: 2 }], 0).is_err());
        assert!(Network::new(s, vec![LayerSpec::ResidualBlock { filters: 3, scale: ResidualScale::default() }], 0).is_err());
        assert!(Network::new(s, vec![LayerSpec::Dropout { rate: 1.0 }], 0).is_err());
        let mut net = Network::new(s, vec![LayerSpec::Flatten], 0).unwrap();
        assert!(net.forward(&Tensor4::zeros(1, Shape::new(4, 4, 1))).is_err());
    }

    #[test]
    fn backward_needs_a_fresh_forward() {
        let s = Shape::flat(3);
        let mut net = Network::new(s, vec![LayerSpec::Dense { units: 2 }], 0).unwrap();
        let dy = Tensor4::zeros(1, Shape::flat(2));
        assert!(matches!(net.backward(&dy), Err(NnError::StaleCache)));
        net.forward(&Tensor4::zeros(1, s)).unwrap();
        net.backward(&dy).unwrap();
        assert!(matches!(net.backward(&dy), Err(NnError::StaleCache)));
        net.set_mode(Mode::Infer);
        net.forward(&Tensor4::zeros(1, s)).unwrap();
        assert!(matches!(net.backward(&dy), Err(NnError::StaleCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let s = Shape::new(4, 4, 2);
        let mut net = Network::new(
            s,
            vec![LayerSpec::conv(3, 4), LayerSpec::Relu, LayerSpec::Flatten, LayerSpec::Dense { units: 3 }],
            1,
        )
        .unwrap();
        net.forward(&random_tensor(2, s, &mut Prng::new(1))).unwrap();
        net.backward(&Tensor4::zeros(2, Shape::flat(3))).unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mae_contract() {
        let s = Shape::flat(4);
        let a = t(s, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(mae_loss(&a, &a).unwrap().0, 0.0);
        let b = t(s, a.data().iter().map(|v| v + 0.25).collect());
        assert!((mae_loss(&a, &b).unwrap().0 - 0.25).abs() < 1e-15);
        assert!(mae_loss(&a, &Tensor4::zeros(1, Shape::flat(3))).is_err());
    }

    #[test]
    fn scce_contract() {
        let s = Shape::flat(2);
        let (l, g) = scce_loss(&t(s, vec![0.3, 0.3]), &[1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g.data()[0] - 0.5).abs() < 1e-15 && (g.data()[1] + 0.5).abs() < 1e-15);
        let (l, _) = scce_loss(&t(s, vec![0.0, 800.0]), &[1]).unwrap();
        assert!(l.abs() < 1e-300);
        assert!(matches!(
            scce_loss(&t(s, vec![0.0, 0.0]), &[2]),
            Err(NnError::BadLabel { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn adam_first_step() {
        let mut adam = Adam::new(1e-4, 1);
        let mut p = [0.5];
        adam.step(&mut p, &[1.0]).unwrap();
        let expected = 0.5 - 1e-4 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18);
        let mut q = [0.5, -2.0];
        let mut adam = Adam::new(1e-3, 2);
        adam.step(&mut q, &[0.0, 0.0]).unwrap();
        assert_eq!(q, [0.5, -2.0]);
        assert!(adam.step(&mut q, &[0.0]).is_err());
    }

    #[test]
    fn inference_is_deterministic_and_dropout_free() {
        let s = Shape::new(4, 4, 3);
        let specs = vec![
            LayerSpec::SpatialDropout2d { rate: 0.5 },
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate: 0.3 },
        ];
        let mut net = Network::new(s, specs, 4).unwrap();
        net.set_mode(Mode::Infer);
        let x = random_tensor(3, s, &mut Prng::new(2));
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.data(), x.data());
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let s = Shape::new(2, 2, 3);
        let x = random_tensor(1, s, &mut Prng::new(3));
        for spec in [LayerSpec::Dropout { rate: 0.2 }, LayerSpec::SpatialDropout2d { rate: 0.2 }] {
            let mut net = Network::new(s, vec![spec], 5).unwrap();
            let draws = 10_000;
            let mut sum = vec![0.0; s.len()];
            for _ in 0..draws {
                let y = net.forward(&x).unwrap();
                sum.iter_mut().zip(y.data()).for_each(|(a, b)| *a += b);
            }
            for (m, v) in sum.iter().zip(x.data()) {
                let mean = m / draws as f64;
                assert!((mean - v).abs() <= 0.02 * v.abs(), "{mean} vs {v}");
            }
        }
    }

    #[test]
    fn spatial_dropout_zeroes_whole_maps() {
        let s = Shape::new(3, 3, 16);
        let mut net = Network::new(s, vec![LayerSpec::SpatialDropout2d { rate: 0.5 }], 6).unwrap();
        let x = Tensor4::from_vec(1, s, vec![1.0; s.len()]).unwrap();
        let y = net.forward(&x).unwrap();
        for c in 0..16 {
            let v: Vec<f64> = (0..9).map(|i| y.data()[i * 16 + c]).collect();
            assert!(v.iter().all(|&a| a == v[0]));
            assert!(v[0] == 0.0 || v[0] == 2.0);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = Shape::new(4, 4, 2);
        let specs = vec![
            LayerSpec::conv(3, 4),
            LayerSpec::ResidualBlock { filters: 4, scale: ResidualScale::Branch(0.1) },
            LayerSpec::Residual {
                body: vec![LayerSpec::conv(3, 4)],
                scale: ResidualScale::Skip(1.0),
            },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ];
        let net = Network::new(s, specs, 9).unwrap();
        let ck = Checkpoint::new(serde_json::json!({"epochs": 3})).with("net", &net);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.metadata, ck.metadata);
        let got = back.get("net").unwrap();
        assert_eq!(got.spec(), net.spec());
        assert_eq!(
            got.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            net.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[30] ^= 4;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(NnError::Checksum)));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
        assert!(matches!(Checkpoint::from_bytes(b"SARFxxxxxxxxxxxx"), Err(NnError::Format(_))));
    }

    #[test]
    fn concatenation_keeps_parameters() {
        let a = Network::new(Shape::flat(3), vec![LayerSpec::Dense { units: 4 }], 1).unwrap();
        let b = Network::new(Shape::flat(4), vec![LayerSpec::Dense { units: 2 }], 2).unwrap();
        let mut ab = a.then(&b).unwrap();
        assert_eq!(ab.param_count(), a.param_count() + b.param_count());
        let x = random_tensor(2, Shape::flat(3), &mut Prng::new(0));
        let (mut a, mut b) = (a, b);
        let direct = b.forward(&a.forward(&x).unwrap()).unwrap();
        assert_eq!(ab.forward(&x).unwrap(), direct);
        assert!(b.then(&a).is_err());
    }
}
