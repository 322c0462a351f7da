//! Classical CNN head trained on quanvolved feature maps.
//!
//! ```text
//! input 1xHxW
//!   -> conv 3x3 (32) -> ReLU -> maxpool 2x2/2
//!   -> conv 3x3 (64) -> ReLU -> maxpool 2x2/2
//!   -> flatten -> dense 128 -> ReLU -> dropout -> dense C -> softmax
//! ```
//!
//! Convolutions are valid (unpadded), so a 14x14 map runs
//! 14 -> 12 -> 6 -> 4 -> 2 and flattens to 256 features.

pub mod checkpoint;
pub mod gradcheck;
mod train;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imageops::ImageTensor;

pub use train::{
    evaluate, train, ConfusionMatrix, EpochMetrics, Evaluation, Metrics, Optimizer, Sample,
    TrainConfig,
};

/// Floor added inside the log of the cross-entropy.
pub const CE_EPSILON: f64 = 1e-12;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Size("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("softmax of non-finite logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `-ln(probs[class] + 1e-12)`.
pub fn cross_entropy(probs: &[f64], class: usize) -> Result<f64> {
    let p = probs.get(class).ok_or_else(|| {
        Error::Argument(format!("class {class} out of range for {} outputs", probs.len()))
    })?;
    Ok(-(p + CE_EPSILON).ln())
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Channel-major stack of feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels * height * width != values.len() || values.is_empty() {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} tensor cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("tensor values must be finite".into()));
        }
        Ok(Self { channels, height, width, values })
    }

    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, values: vec![0.0; channels * height * width] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&ImageTensor> for Tensor3 {
    fn from(img: &ImageTensor) -> Self {
        Self {
            channels: 1,
            height: img.height(),
            width: img.width(),
            values: img.values().to_vec(),
        }
    }
}

/// Layer sizes. [`Architecture::new`] gives the 32/64/128 stack with 3x3
/// kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_h: usize,
    pub input_w: usize,
    pub num_classes: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub hidden: usize,
}

impl Architecture {
    pub fn new(input_h: usize, input_w: usize, num_classes: usize) -> Self {
        Self {
            input_h,
            input_w,
            num_classes,
            conv1_filters: 32,
            conv2_filters: 64,
            kernel: 3,
            hidden: 128,
        }
    }

    /// Spatial dims after each stage: conv1, pool1, conv2, pool2.
    pub fn stage_dims(&self) -> Result<[(usize, usize); 4]> {
        let k = self.kernel;
        let conv = |(h, w): (usize, usize)| -> Result<(usize, usize)> {
            if h < k || w < k {
                return Err(Error::Shape(format!("{h}x{w} map too small for {k}x{k} kernel")));
            }
            Ok((h - k + 1, w - k + 1))
        };
        let pool = |(h, w): (usize, usize)| -> Result<(usize, usize)> {
            if h < 2 || w < 2 {
                return Err(Error::Shape(format!("{h}x{w} map too small for 2x2 pooling")));
            }
            Ok((h / 2, w / 2))
        };
        let c1 = conv((self.input_h, self.input_w))?;
        let p1 = pool(c1)?;
        let c2 = conv(p1)?;
        let p2 = pool(c2)?;
        Ok([c1, p1, c2, p2])
    }

    pub fn flatten_len(&self) -> Result<usize> {
        let (h, w) = self.stage_dims()?[3];
        Ok(self.conv2_filters * h * w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if [self.conv1_filters, self.conv2_filters, self.kernel, self.hidden].contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        self.stage_dims().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    /// `[out][in][kh][kw]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub outputs: usize,
    pub inputs: usize,
    /// `[out][in]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    fn zeros(outputs: usize, inputs: usize) -> Self {
        Self { outputs, inputs, weights: vec![0.0; outputs * inputs], bias: vec![0.0; outputs] }
    }
}

/// All trainable parameters. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub conv1: ConvParams,
    pub conv2: ConvParams,
    pub dense1: DenseParams,
    pub dense2: DenseParams,
}

pub const PARAM_GROUPS: [&str; 8] = [
    "conv1.weights",
    "conv1.bias",
    "conv2.weights",
    "conv2.bias",
    "dense1.weights",
    "dense1.bias",
    "dense2.weights",
    "dense2.bias",
];

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            conv1: ConvParams::zeros(arch.conv1_filters, 1, arch.kernel),
            conv2: ConvParams::zeros(arch.conv2_filters, arch.conv1_filters, arch.kernel),
            dense1: DenseParams::zeros(arch.hidden, arch.flatten_len()?),
            dense2: DenseParams::zeros(arch.num_classes, arch.hidden),
        })
    }

    /// Parameter groups in [`PARAM_GROUPS`] order.
    pub fn groups(&self) -> [&[f64]; 8] {
        [
            &self.conv1.weights,
            &self.conv1.bias,
            &self.conv2.weights,
            &self.conv2.bias,
            &self.dense1.weights,
            &self.dense1.bias,
            &self.dense2.weights,
            &self.dense2.bias,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.dense1.weights,
            &mut self.dense1.bias,
            &mut self.dense2.weights,
            &mut self.dense2.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.groups().iter().map(|g| g.len()).sum()
    }

    /// `self += scale * other`, group by group.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, src) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// Glorot-uniform weights, bound `sqrt(6 / (fan_in + fan_out))`, zero biases.
/// Convolution fans count the kernel area.
pub fn weight_init(arch: Architecture, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k2 = arch.kernel * arch.kernel;
    let fans = [
        (k2, arch.conv1_filters * k2),
        (arch.conv1_filters * k2, arch.conv2_filters * k2),
        (params.dense1.inputs, arch.hidden),
        (arch.hidden, arch.num_classes),
    ];
    let weight_groups = [0usize, 2, 4, 6];
    let groups = params.groups_mut();
    for (&g, (fan_in, fan_out)) in weight_groups.iter().zip(fans) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in groups[g].iter_mut() {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Inverted-dropout mask for the hidden dense layer: each unit is kept with
/// probability `1 - rate` and scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: Vec<f64>,
}

impl DropoutMask {
    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Argument(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        let keep = 1.0 / (1.0 - rate);
        let scale = (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        Ok(Self { scale })
    }

    /// Mask that keeps every unit unchanged.
    pub fn identity(len: usize) -> Self {
        Self { scale: vec![1.0; len] }
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Eval,
    Train(&'a DropoutMask),
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub conv1_pre: Tensor3,
    pub pool1: Tensor3,
    pool1_argmax: Vec<usize>,
    pub conv2_pre: Tensor3,
    pub pool2: Tensor3,
    pool2_argmax: Vec<usize>,
    pub dense1_pre: Vec<f64>,
    /// Hidden activations after ReLU and dropout.
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: Vec<f64>,
    pub activations: Activations,
}

fn conv_forward(input: &Tensor3, p: &ConvParams) -> Tensor3 {
    let (cin, h, w) = input.dims();
    let k = p.kernel;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = Tensor3::zeros(p.out_channels, oh, ow);
    for o in 0..p.out_channels {
        let plane = &mut out.values[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(p.bias[o]);
        for i in 0..cin {
            let src = &input.values[i * h * w..(i + 1) * h * w];
            let kern = &p.weights[(o * cin + i) * k * k..(o * cin + i + 1) * k * k];
            for m in 0..k {
                for n in 0..k {
                    let wgt = kern[m * k + n];
                    for y in 0..oh {
                        let row = &src[(y + m) * w + n..(y + m) * w + n + ow];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += wgt * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// 2x2/2 max pooling; also returns the flat input index chosen for each
/// output (first maximum on ties).
fn pool_forward(input: &Tensor3) -> (Tensor3, Vec<usize>) {
    let (c, h, w) = input.dims();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor3::zeros(c, oh, ow);
    let mut argmax = vec![0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = ch * h * w + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * y + dy) * w + 2 * x + dx;
                    if input.values[idx] > input.values[best] {
                        best = idx;
                    }
                }
                let o = (ch * oh + y) * ow + x;
                out.values[o] = input.values[best];
                argmax[o] = best;
            }
        }
    }
    (out, argmax)
}

fn relu_tensor(t: &Tensor3) -> Tensor3 {
    Tensor3 { values: t.values.iter().map(|&v| relu(v)).collect(), ..*t }
}

fn dense_forward(input: &[f64], p: &DenseParams) -> Vec<f64> {
    p.weights
        .chunks(p.inputs)
        .zip(&p.bias)
        .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

/// Runs the network. In train mode the hidden layer is multiplied by the
/// given dropout mask; eval mode applies no dropout.
pub fn forward(params: &ModelParams, input: &Tensor3, mode: Mode<'_>) -> Result<ForwardPass> {
    let arch = &params.arch;
    if input.dims() != (1, arch.input_h, arch.input_w) {
        return Err(Error::Shape(format!(
            "input {:?} does not match model input 1x{}x{}",
            input.dims(),
            arch.input_h,
            arch.input_w
        )));
    }
    let conv1_pre = conv_forward(input, &params.conv1);
    let (pool1, pool1_argmax) = pool_forward(&relu_tensor(&conv1_pre));
    let conv2_pre = conv_forward(&pool1, &params.conv2);
    let (pool2, pool2_argmax) = pool_forward(&relu_tensor(&conv2_pre));
    let dense1_pre = dense_forward(&pool2.values, &params.dense1);
    let mut hidden: Vec<f64> = dense1_pre.iter().map(|&v| relu(v)).collect();
    if let Mode::Train(mask) = mode {
        if mask.scale.len() != hidden.len() {
            return Err(Error::Shape(format!(
                "dropout mask of {} units for {} hidden units",
                mask.scale.len(),
                hidden.len()
            )));
        }
        for (h, s) in hidden.iter_mut().zip(&mask.scale) {
            *h *= s;
        }
    }
    let logits = dense_forward(&hidden, &params.dense2);
    let probs = softmax(&logits)?;
    Ok(ForwardPass {
        probs,
        activations: Activations {
            conv1_pre,
            pool1,
            pool1_argmax,
            conv2_pre,
            pool2,
            pool2_argmax,
            dense1_pre,
            hidden,
            logits,
        },
    })
}

/// Gradient of the pre-activation of a conv layer back through ReLU and the
/// following max pool.
fn unpool_relu(grad_pooled: &[f64], argmax: &[usize], pre: &Tensor3) -> Vec<f64> {
    let mut grad = vec![0.0; pre.values.len()];
    for (g, &idx) in grad_pooled.iter().zip(argmax) {
        if pre.values[idx] > 0.0 {
            grad[idx] += g;
        }
    }
    grad
}

/// Accumulates weight/bias gradients of a conv layer and, when requested,
/// returns the gradient with respect to its input.
fn conv_backward(
    input: &Tensor3,
    p: &ConvParams,
    grad_out: &[f64],
    grads: &mut ConvParams,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (cin, h, w) = input.dims();
    let k = p.kernel;
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut grad_in = want_input_grad.then(|| vec![0.0; input.values.len()]);
    for o in 0..p.out_channels {
        let g = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        grads.bias[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input.values[i * h * w..(i + 1) * h * w];
            let base = (o * cin + i) * k * k;
            for m in 0..k {
                for n in 0..k {
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let row = &src[(y + m) * w + n..(y + m) * w + n + ow];
                        acc += row.iter().zip(&g[y * ow..(y + 1) * ow]).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grads.weights[base + m * k + n] += acc;
                    if let Some(gi) = grad_in.as_mut() {
                        let wgt = p.weights[base + m * k + n];
                        let dst = &mut gi[i * h * w..(i + 1) * h * w];
                        for y in 0..oh {
                            let d = &mut dst[(y + m) * w + n..(y + m) * w + n + ow];
                            for (dv, gv) in d.iter_mut().zip(&g[y * ow..(y + 1) * ow]) {
                                *dv += wgt * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Analytic gradients of `cross_entropy(forward(input), class)` with respect
/// to every parameter, using `mask` for the dropout layer (`None` = eval mode).
/// Returns the gradients and the loss.
pub fn backward(
    params: &ModelParams,
    input: &Tensor3,
    class: usize,
    mask: Option<&DropoutMask>,
) -> Result<(ModelParams, f64)> {
    let arch = &params.arch;
    if class >= arch.num_classes {
        return Err(Error::Argument(format!(
            "class {class} out of range for {} classes",
            arch.num_classes
        )));
    }
    let mode = mask.map_or(Mode::Eval, Mode::Train);
    let fp = forward(params, input, mode)?;
    let act = &fp.activations;
    let loss = cross_entropy(&fp.probs, class)?;
    let mut grads = ModelParams::zeros(*arch)?;

    // d/dz of -ln(p_y + eps) through softmax
    let py = fp.probs[class];
    let scale = py / (py + CE_EPSILON);
    let grad_logits: Vec<f64> = fp
        .probs
        .iter()
        .enumerate()
        .map(|(i, p)| scale * (p - if i == class { 1.0 } else { 0.0 }))
        .collect();

    let d2 = &params.dense2;
    let mut grad_hidden = vec![0.0; d2.inputs];
    for (o, g) in grad_logits.iter().enumerate() {
        grads.dense2.bias[o] = *g;
        let row = &d2.weights[o * d2.inputs..(o + 1) * d2.inputs];
        let grow = &mut grads.dense2.weights[o * d2.inputs..(o + 1) * d2.inputs];
        for j in 0..d2.inputs {
            grow[j] = g * act.hidden[j];
            grad_hidden[j] += g * row[j];
        }
    }

    let grad_d1: Vec<f64> = grad_hidden
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let drop = mask.map_or(1.0, |m| m.scale[j]);
            if act.dense1_pre[j] > 0.0 { g * drop } else { 0.0 }
        })
        .collect();
    let d1 = &params.dense1;
    let flat = &act.pool2.values;
    let mut grad_flat = vec![0.0; d1.inputs];
    for (o, g) in grad_d1.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        grads.dense1.bias[o] = *g;
        let row = &d1.weights[o * d1.inputs..(o + 1) * d1.inputs];
        let grow = &mut grads.dense1.weights[o * d1.inputs..(o + 1) * d1.inputs];
        for j in 0..d1.inputs {
            grow[j] = g * flat[j];
            grad_flat[j] += g * row[j];
        }
    }

    let grad_conv2 = unpool_relu(&grad_flat, &act.pool2_argmax, &act.conv2_pre);
    let grad_pool1 = conv_backward(&act.pool1, &params.conv2, &grad_conv2, &mut grads.conv2, true)
        .expect("input gradient requested");
    let grad_conv1 = unpool_relu(&grad_pool1, &act.pool1_argmax, &act.conv1_pre);
    conv_backward(input, &params.conv1, &grad_conv1, &mut grads.conv1, false);

    Ok((grads, loss))
}
