//! Small ReLU CNN classifier with activation-density instrumentation.
//!
//! Forward passes record the same per-layer trace the NLP pipeline produces,
//! plus a [`DensityReport`] of nonzero fractions. Interval bound propagation
//! gives a sound upper bound on achievable density, and the module carries
//! the hand-written reverse pass needed by the white-box L-BFGS attack.
//!
//! Density conventions: "post-ReLU" counts only ReLU-gated layer outputs;
//! "overall" counts every recorded activation tensor — the network input
//! plus each layer's output, ReLU-gated or not.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::energy::{dram_traffic, ActivationTrace, FlushPolicy, LayerTraceEntry, TensorWords};
use crate::math;

/// Image tensor in channel-major layout, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn nonzero(&self) -> u64 {
        self.data.iter().filter(|v| **v != 0.0).count() as u64
    }
}

/// One network layer. Convolutions are valid (no padding), stride 1.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv {
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        /// `[out][in][ky][kx]` flattened.
        weights: Vec<f64>,
        bias: Vec<f64>,
        relu: bool,
    },
    Linear {
        outputs: usize,
        inputs: usize,
        /// `[out][in]` flattened.
        weights: Vec<f64>,
        bias: Vec<f64>,
        relu: bool,
    },
}

impl Layer {
    fn relu(&self) -> bool {
        match self {
            Layer::Conv { relu, .. } | Layer::Linear { relu, .. } => *relu,
        }
    }

    fn weight_words(&self) -> u64 {
        match self {
            Layer::Conv {
                out_channels,
                in_channels,
                kernel,
                bias,
                ..
            } => (out_channels * in_channels * kernel * kernel + bias.len()) as u64,
            Layer::Linear {
                outputs,
                inputs,
                bias,
                ..
            } => (outputs * inputs + bias.len()) as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub input_shape: (usize, usize, usize),
    pub layers: Vec<Layer>,
    pub num_classes: usize,
}

impl CnnModel {
    /// Check that layer shapes chain from the input to `num_classes` logits
    /// and that every hidden layer is ReLU-gated.
    pub fn validate(&self) -> Result<(), VisionError> {
        let mut shape = self.input_shape;
        let mut flat = shape.0 * shape.1 * shape.2;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv {
                    out_channels,
                    in_channels,
                    kernel,
                    weights,
                    bias,
                    ..
                } => {
                    if *in_channels != shape.0 || shape.1 < *kernel || shape.2 < *kernel {
                        return Err(VisionError::ShapeMismatch { layer: i });
                    }
                    if weights.len() != out_channels * in_channels * kernel * kernel
                        || bias.len() != *out_channels
                    {
                        return Err(VisionError::ShapeMismatch { layer: i });
                    }
                    shape = (
                        *out_channels,
                        shape.1 - kernel + 1,
                        shape.2 - kernel + 1,
                    );
                    flat = shape.0 * shape.1 * shape.2;
                }
                Layer::Linear {
                    outputs,
                    inputs,
                    weights,
                    bias,
                    ..
                } => {
                    if *inputs != flat || weights.len() != outputs * inputs || bias.len() != *outputs
                    {
                        return Err(VisionError::ShapeMismatch { layer: i });
                    }
                    flat = *outputs;
                    shape = (*outputs, 1, 1);
                }
            }
            let hidden = i + 1 < self.layers.len();
            if hidden && !layer.relu() {
                return Err(VisionError::HiddenLayerWithoutRelu { layer: i });
            }
        }
        if flat != self.num_classes {
            return Err(VisionError::ShapeMismatch {
                layer: self.layers.len(),
            });
        }
        Ok(())
    }
}

/// Nonzero fractions of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    /// Nonzero fraction over ReLU-gated layer outputs.
    pub post_relu_density: f64,
    /// Nonzero fraction over the input and every layer output.
    pub overall_density: f64,
    /// Per-layer output densities, in layer order.
    pub per_layer: Vec<(String, f64)>,
    pub class: Option<usize>,
}

/// Result of one forward pass through a layer: pre-activation and
/// post-activation values.
struct LayerPass {
    pre: Vec<f64>,
    post: Vec<f64>,
}

/// Pre-activation output and new shape for one layer applied to `current`.
fn layer_forward(
    layer: &Layer,
    current: &[f64],
    shape: (usize, usize, usize),
) -> (Vec<f64>, (usize, usize, usize)) {
    match layer {
        Layer::Conv {
            out_channels,
            in_channels,
            kernel,
            weights,
            bias,
            ..
        } => {
            let (h, w) = (shape.1, shape.2);
            let (oh, ow) = (h - kernel + 1, w - kernel + 1);
            let mut out = vec![0.0; out_channels * oh * ow];
            for oc in 0..*out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..*in_channels {
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let iv = current[(ic * h + oy + ky) * w + ox + kx];
                                    let wv = weights
                                        [((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                    acc += iv * wv;
                                }
                            }
                        }
                        out[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            (out, (*out_channels, oh, ow))
        }
        Layer::Linear {
            outputs,
            inputs,
            weights,
            bias,
            ..
        } => {
            let mut out = vec![0.0; *outputs];
            for o in 0..*outputs {
                let mut acc = bias[o];
                let row = &weights[o * inputs..(o + 1) * inputs];
                for (i, wv) in row.iter().enumerate() {
                    acc += current[i] * wv;
                }
                out[o] = acc;
            }
            (out, (*outputs, 1, 1))
        }
    }
}

fn forward_layers(model: &CnnModel, image: &Image) -> Result<Vec<LayerPass>, VisionError> {
    if image.shape() != model.input_shape {
        return Err(VisionError::InputShape {
            expected: model.input_shape,
            got: image.shape(),
        });
    }
    let mut passes = Vec::with_capacity(model.layers.len());
    let mut shape = model.input_shape;
    let mut current = image.data.clone();
    for layer in &model.layers {
        let (pre, new_shape) = layer_forward(layer, &current, shape);
        shape = new_shape;
        let post = if layer.relu() {
            pre.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
        } else {
            pre.clone()
        };
        current = post.clone();
        passes.push(LayerPass { pre, post });
    }
    Ok(passes)
}

fn nnz(values: &[f64]) -> u64 {
    values.iter().filter(|v| **v != 0.0).count() as u64
}

/// Multiplies a zero-skipping accelerator executes in a conv or linear
/// layer: operand pairs where both input value and weight are nonzero.
fn count_layer_mults(layer: &Layer, input: &[f64], in_shape: (usize, usize, usize)) -> (u64, u64) {
    match layer {
        Layer::Conv {
            out_channels,
            in_channels,
            kernel,
            weights,
            ..
        } => {
            let (h, w) = (in_shape.1, in_shape.2);
            let (oh, ow) = (h - kernel + 1, w - kernel + 1);
            let total = (out_channels * oh * ow * in_channels * kernel * kernel) as u64;
            let mut nonzero = 0u64;
            for oc in 0..*out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ic in 0..*in_channels {
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let iv = input[(ic * h + oy + ky) * w + ox + kx];
                                    let wv = weights
                                        [((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                    if iv != 0.0 && wv != 0.0 {
                                        nonzero += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (total, nonzero)
        }
        Layer::Linear {
            outputs,
            inputs,
            weights,
            ..
        } => {
            let total = (outputs * inputs) as u64;
            let mut nonzero = 0u64;
            for o in 0..*outputs {
                let row = &weights[o * inputs..(o + 1) * inputs];
                for (i, wv) in row.iter().enumerate() {
                    if input[i] != 0.0 && *wv != 0.0 {
                        nonzero += 1;
                    }
                }
            }
            (total, nonzero)
        }
    }
}

/// Instrumented forward pass: logits, per-layer trace, densities.
pub fn cnn_forward(
    model: &CnnModel,
    image: &Image,
) -> Result<(Vec<f64>, ActivationTrace, DensityReport), VisionError> {
    let passes = forward_layers(model, image)?;

    let mut trace = ActivationTrace::new();
    let mut shape = model.input_shape;
    let mut input_slice: &[f64] = &image.data;
    let mut per_layer = Vec::with_capacity(model.layers.len());
    let mut post_nnz = 0u64;
    let mut post_total = 0u64;
    let mut overall_nnz = image.nonzero();
    let mut overall_total = image.len() as u64;

    for (i, (layer, pass)) in model.layers.iter().zip(&passes).enumerate() {
        let (mult_total, mult_nonzero) = count_layer_mults(layer, input_slice, shape);
        let in_words = TensorWords {
            total: input_slice.len() as u64,
            nonzero: nnz(input_slice),
        };
        let out_words = TensorWords {
            total: pass.post.len() as u64,
            nonzero: nnz(&pass.post),
        };
        let dram = dram_traffic(in_words, layer.weight_words(), out_words, FlushPolicy::PerLayerFull);
        let name = match layer {
            Layer::Conv { .. } => format!("conv{i}"),
            Layer::Linear { .. } => format!("linear{i}"),
        };
        per_layer.push((
            name.clone(),
            out_words.nonzero as f64 / out_words.total as f64,
        ));
        trace.push(LayerTraceEntry {
            layer_name: name,
            mult_total,
            mult_nonzero,
            act_total: out_words.total,
            act_nonzero: out_words.nonzero,
            dram_words_raw: dram.raw,
            dram_words_compressed: dram.compressed,
        });

        if layer.relu() {
            post_nnz += out_words.nonzero;
            post_total += out_words.total;
        }
        overall_nnz += out_words.nonzero;
        overall_total += out_words.total;

        shape = match layer {
            Layer::Conv {
                out_channels,
                kernel,
                ..
            } => (*out_channels, shape.1 - kernel + 1, shape.2 - kernel + 1),
            Layer::Linear { outputs, .. } => (*outputs, 1, 1),
        };
        input_slice = &pass.post;
    }

    let logits = passes.last().map(|p| p.post.clone()).unwrap_or_default();
    let class = argmax(&logits);
    let report = DensityReport {
        post_relu_density: if post_total > 0 {
            post_nnz as f64 / post_total as f64
        } else {
            0.0
        },
        overall_density: overall_nnz as f64 / overall_total as f64,
        per_layer,
        class: Some(class),
    };
    Ok((logits, trace, report))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Result of a budget-limited forward pass.
#[derive(Debug, Clone)]
pub enum BudgetedForward {
    Completed {
        logits: Vec<f64>,
        trace: ActivationTrace,
        cost_pj: f64,
    },
    Rejected {
        partial_cost_pj: f64,
        layers_completed: usize,
        trace: ActivationTrace,
    },
}

/// Forward pass that aborts as soon as the accumulated optimized energy
/// exceeds `budget_pj`, checked after every layer.
pub fn cnn_forward_budgeted(
    model: &CnnModel,
    image: &Image,
    cost: &crate::energy::AsicCostModel,
    budget_pj: f64,
) -> Result<BudgetedForward, VisionError> {
    if image.shape() != model.input_shape {
        return Err(VisionError::InputShape {
            expected: model.input_shape,
            got: image.shape(),
        });
    }
    let mut trace = ActivationTrace::new();
    let mut shape = model.input_shape;
    let mut current = image.data.clone();
    let mut spent = 0.0f64;

    for (i, layer) in model.layers.iter().enumerate() {
        let (mult_total, mult_nonzero) = count_layer_mults(layer, &current, shape);
        let (pre, new_shape) = layer_forward(layer, &current, shape);
        shape = new_shape;
        let post: Vec<f64> = if layer.relu() {
            pre.iter().map(|v| if *v > 0.0 { *v } else { 0.0 }).collect()
        } else {
            pre
        };
        let in_words = TensorWords {
            total: current.len() as u64,
            nonzero: nnz(&current),
        };
        let out_words = TensorWords {
            total: post.len() as u64,
            nonzero: nnz(&post),
        };
        let dram = dram_traffic(
            in_words,
            layer.weight_words(),
            out_words,
            FlushPolicy::PerLayerFull,
        );
        let name = match layer {
            Layer::Conv { .. } => format!("conv{i}"),
            Layer::Linear { .. } => format!("linear{i}"),
        };
        trace.push(LayerTraceEntry {
            layer_name: name,
            mult_total,
            mult_nonzero,
            act_total: out_words.total,
            act_nonzero: out_words.nonzero,
            dram_words_raw: dram.raw,
            dram_words_compressed: dram.compressed,
        });

        let entry = trace.layers.last().unwrap();
        let mult = if cost.zero_skip_enabled {
            entry.mult_nonzero
        } else {
            entry.mult_total
        };
        let words = if cost.dram_compress_enabled {
            entry.dram_words_compressed
        } else {
            entry.dram_words_raw
        };
        spent += mult as f64 * cost.fp_mult_energy_pj + words as f64 * cost.dram_access_energy_pj;
        if spent > budget_pj {
            return Ok(BudgetedForward::Rejected {
                partial_cost_pj: spent,
                layers_completed: i + 1,
                trace,
            });
        }
        current = post;
    }

    Ok(BudgetedForward::Completed {
        logits: current,
        trace,
        cost_pj: spent,
    })
}

/// Per-pixel input intervals for IBP.
#[derive(Debug, Clone)]
pub struct InputBox {
    pub lower: Image,
    pub upper: Image,
}

impl InputBox {
    /// The full natural range [0, 1] for every pixel.
    pub fn unit(channels: usize, height: usize, width: usize) -> Self {
        InputBox {
            lower: Image::zeros(channels, height, width),
            upper: Image::filled(channels, height, width, 1.0),
        }
    }
}

/// Upper bound on achievable densities over an input box.
#[derive(Debug, Clone, PartialEq)]
pub struct IbpReport {
    pub post_relu_max_density: f64,
    pub overall_max_density: f64,
    pub per_layer: Vec<(String, f64)>,
}

/// Propagate intervals through the network. A ReLU-gated neuron is provably
/// zero iff its pre-activation upper bound is <= 0; an ungated value is
/// provably zero only when its interval is exactly [0, 0]. Maximum density
/// is one minus the provably-zero fraction.
pub fn ibp_max_density(model: &CnnModel, input_box: &InputBox) -> Result<IbpReport, VisionError> {
    if input_box.lower.shape() != model.input_shape || input_box.upper.shape() != model.input_shape
    {
        return Err(VisionError::InputShape {
            expected: model.input_shape,
            got: input_box.lower.shape(),
        });
    }

    let mut lo = input_box.lower.data.clone();
    let mut hi = input_box.upper.data.clone();
    let mut shape = model.input_shape;

    let input_fixed_zero = lo
        .iter()
        .zip(hi.iter())
        .filter(|(l, u)| **l == 0.0 && **u == 0.0)
        .count() as u64;
    let mut overall_maybe = (lo.len() as u64) - input_fixed_zero;
    let mut overall_total = lo.len() as u64;
    let mut post_maybe = 0u64;
    let mut post_total = 0u64;
    let mut per_layer = Vec::with_capacity(model.layers.len());

    for (i, layer) in model.layers.iter().enumerate() {
        let (mut new_lo, mut new_hi) = match layer {
            Layer::Conv {
                out_channels,
                in_channels,
                kernel,
                weights,
                bias,
                ..
            } => {
                let (h, w) = (shape.1, shape.2);
                let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                let mut out_lo = vec![0.0; out_channels * oh * ow];
                let mut out_hi = vec![0.0; out_channels * oh * ow];
                for oc in 0..*out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc_lo = bias[oc];
                            let mut acc_hi = bias[oc];
                            for ic in 0..*in_channels {
                                for ky in 0..*kernel {
                                    for kx in 0..*kernel {
                                        let idx = (ic * h + oy + ky) * w + ox + kx;
                                        let wv = weights[((oc * in_channels + ic) * kernel + ky)
                                            * kernel
                                            + kx];
                                        if wv >= 0.0 {
                                            acc_lo += wv * lo[idx];
                                            acc_hi += wv * hi[idx];
                                        } else {
                                            acc_lo += wv * hi[idx];
                                            acc_hi += wv * lo[idx];
                                        }
                                    }
                                }
                            }
                            out_lo[(oc * oh + oy) * ow + ox] = acc_lo;
                            out_hi[(oc * oh + oy) * ow + ox] = acc_hi;
                        }
                    }
                }
                shape = (*out_channels, oh, ow);
                (out_lo, out_hi)
            }
            Layer::Linear {
                outputs,
                inputs,
                weights,
                bias,
                ..
            } => {
                let mut out_lo = vec![0.0; *outputs];
                let mut out_hi = vec![0.0; *outputs];
                for o in 0..*outputs {
                    let mut acc_lo = bias[o];
                    let mut acc_hi = bias[o];
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    for (idx, wv) in row.iter().enumerate() {
                        if *wv >= 0.0 {
                            acc_lo += wv * lo[idx];
                            acc_hi += wv * hi[idx];
                        } else {
                            acc_lo += wv * hi[idx];
                            acc_hi += wv * lo[idx];
                        }
                    }
                    out_lo[o] = acc_lo;
                    out_hi[o] = acc_hi;
                }
                shape = (*outputs, 1, 1);
                (out_lo, out_hi)
            }
        };

        let total = new_lo.len() as u64;
        let maybe_nonzero = if layer.relu() {
            let m = new_hi.iter().filter(|u| **u > 0.0).count() as u64;
            for (l, u) in new_lo.iter_mut().zip(new_hi.iter_mut()) {
                if *l < 0.0 {
                    *l = 0.0;
                }
                if *u < 0.0 {
                    *u = 0.0;
                }
            }
            post_maybe += m;
            post_total += total;
            m
        } else {
            new_lo
                .iter()
                .zip(new_hi.iter())
                .filter(|(l, u)| !(**l == 0.0 && **u == 0.0))
                .count() as u64
        };
        overall_maybe += maybe_nonzero;
        overall_total += total;
        let name = match layer {
            Layer::Conv { .. } => format!("conv{i}"),
            Layer::Linear { .. } => format!("linear{i}"),
        };
        per_layer.push((name, maybe_nonzero as f64 / total as f64));

        lo = new_lo;
        hi = new_hi;
    }

    Ok(IbpReport {
        post_relu_max_density: if post_total > 0 {
            post_maybe as f64 / post_total as f64
        } else {
            0.0
        },
        overall_max_density: overall_maybe as f64 / overall_total as f64,
        per_layer,
    })
}

/// Per-class mean overall density over a labelled dataset, densest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDensityProfile {
    /// `(class, mean overall density, sample count)` sorted densest-first.
    pub classes: Vec<(usize, f64, usize)>,
    /// Model classes with no samples in the dataset.
    pub skipped_classes: Vec<usize>,
}

pub fn class_density_profile(
    model: &CnnModel,
    dataset: &[(Image, usize)],
) -> Result<ClassDensityProfile, VisionError> {
    if dataset.is_empty() {
        return Err(VisionError::EmptyDataset);
    }
    let mut sums = vec![0.0f64; model.num_classes];
    let mut counts = vec![0usize; model.num_classes];
    for (image, label) in dataset {
        if *label >= model.num_classes {
            return Err(VisionError::LabelOutOfRange {
                label: *label,
                classes: model.num_classes,
            });
        }
        let (_, _, report) = cnn_forward(model, image)?;
        sums[*label] += report.overall_density;
        counts[*label] += 1;
    }
    let mut classes: Vec<(usize, f64, usize)> = (0..model.num_classes)
        .filter(|c| counts[*c] > 0)
        .map(|c| (c, sums[c] / counts[c] as f64, counts[c]))
        .collect();
    classes.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
    let skipped_classes = (0..model.num_classes).filter(|c| counts[*c] == 0).collect();
    Ok(ClassDensityProfile {
        classes,
        skipped_classes,
    })
}

/// Sponge objective: negated sum of per-layer activation L2 norms. Lower is
/// "better" for the attacker (denser activations everywhere).
pub fn sponge_loss(model: &CnnModel, image: &Image) -> Result<f64, VisionError> {
    let passes = forward_layers(model, image)?;
    let mut loss = 0.0;
    for pass in &passes {
        loss -= l2_norm(&pass.post);
    }
    Ok(loss)
}

/// Sponge objective and its gradient with respect to the input pixels,
/// computed by a hand-written reverse pass through the conv/linear/ReLU
/// stack.
pub fn sponge_loss_grad(model: &CnnModel, image: &Image) -> Result<(f64, Vec<f64>), VisionError> {
    let passes = forward_layers(model, image)?;

    let mut loss = 0.0;
    let mut norms = Vec::with_capacity(passes.len());
    for pass in &passes {
        let n = l2_norm(&pass.post);
        norms.push(n);
        loss -= n;
    }

    // grad[l] accumulates dLoss/d(post_l); walk backwards chaining through
    // each layer's linearisation and ReLU mask.
    let mut grad_post: Vec<f64> = vec![0.0; passes.last().map(|p| p.post.len()).unwrap_or(0)];
    let mut shapes = Vec::with_capacity(model.layers.len() + 1);
    let mut shape = model.input_shape;
    shapes.push(shape);
    for layer in &model.layers {
        shape = match layer {
            Layer::Conv {
                out_channels,
                kernel,
                ..
            } => (*out_channels, shape.1 - kernel + 1, shape.2 - kernel + 1),
            Layer::Linear { outputs, .. } => (*outputs, 1, 1),
        };
        shapes.push(shape);
    }

    for l in (0..model.layers.len()).rev() {
        let pass = &passes[l];
        // Objective term at this layer's output.
        if norms[l] > 0.0 {
            for (g, v) in grad_post.iter_mut().zip(pass.post.iter()) {
                *g -= *v / norms[l];
            }
        }
        // Through the ReLU: zero where the pre-activation was clamped.
        let mut grad_pre = grad_post.clone();
        if model.layers[l].relu() {
            for (g, pre) in grad_pre.iter_mut().zip(pass.pre.iter()) {
                if *pre <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        // Through the affine map to the layer input.
        let in_shape = shapes[l];
        let in_len = in_shape.0 * in_shape.1 * in_shape.2;
        let mut grad_in = vec![0.0; in_len];
        match &model.layers[l] {
            Layer::Conv {
                out_channels,
                in_channels,
                kernel,
                weights,
                ..
            } => {
                let (h, w) = (in_shape.1, in_shape.2);
                let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                for oc in 0..*out_channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = grad_pre[(oc * oh + oy) * ow + ox];
                            if g == 0.0 {
                                continue;
                            }
                            for ic in 0..*in_channels {
                                for ky in 0..*kernel {
                                    for kx in 0..*kernel {
                                        let widx = ((oc * in_channels + ic) * kernel + ky)
                                            * kernel
                                            + kx;
                                        grad_in[(ic * h + oy + ky) * w + ox + kx] +=
                                            g * weights[widx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Layer::Linear {
                outputs,
                inputs,
                weights,
                ..
            } => {
                for o in 0..*outputs {
                    let g = grad_pre[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    for (i, wv) in row.iter().enumerate() {
                        grad_in[i] += g * wv;
                    }
                }
            }
        }
        grad_post = grad_in;
    }

    Ok((loss, grad_post))
}

fn l2_norm(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v * v;
    }
    math::sqrt(acc)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VisionError {
    ShapeMismatch {
        layer: usize,
    },
    HiddenLayerWithoutRelu {
        layer: usize,
    },
    InputShape {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    EmptyDataset,
    LabelOutOfRange {
        label: usize,
        classes: usize,
    },
}

impl fmt::Display for VisionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VisionError::ShapeMismatch { layer } => write!(f, "layer {layer} shape mismatch"),
            VisionError::HiddenLayerWithoutRelu { layer } => {
                write!(f, "hidden layer {layer} must be ReLU-gated")
            }
            VisionError::InputShape { expected, got } => {
                write!(f, "input shape {got:?} does not match model {expected:?}")
            }
            VisionError::EmptyDataset => write!(f, "dataset is empty"),
            VisionError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for VisionError {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    #[test]
    fn all_zero_image_with_zero_biases_has_zero_post_relu_density() {
        let mut model = zoo::reference_cnn();
        for layer in &mut model.layers {
            match layer {
                Layer::Conv { bias, .. } | Layer::Linear { bias, .. } => {
                    for b in bias.iter_mut() {
                        *b = 0.0;
                    }
                }
            }
        }
        let image = Image::zeros(1, 8, 8);
        let (_, _, report) = cnn_forward(&model, &image).unwrap();
        assert_eq!(report.post_relu_density, 0.0);
    }

    #[test]
    fn mixed_sign_activations_give_half_density() {
        // Single linear layer producing pre-activations (-1, 0, 2, 3).
        let model = CnnModel {
            input_shape: (1, 1, 1),
            layers: vec![Layer::Linear {
                outputs: 4,
                inputs: 1,
                weights: vec![-1.0, 0.0, 2.0, 3.0],
                bias: vec![0.0; 4],
                relu: true,
            }],
            num_classes: 4,
        };
        model.validate().unwrap();
        let image = Image::filled(1, 1, 1, 1.0);
        let (_, _, report) = cnn_forward(&model, &image).unwrap();
        assert_eq!(report.per_layer[0].1, 0.5);
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let model = zoo::reference_cnn();
        let image = Image::zeros(1, 4, 4);
        assert!(matches!(
            cnn_forward(&model, &image),
            Err(VisionError::InputShape { .. })
        ));
    }

    #[test]
    fn forward_is_deterministic() {
        let model = zoo::reference_cnn();
        let mut rng = crate::rng_from_seed(3);
        let image = crate::corpus::random_image(&mut rng, 1, 8, 8);
        let (l1, t1, d1) = cnn_forward(&model, &image).unwrap();
        let (l2, t2, d2) = cnn_forward(&model, &image).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(t1, t2);
        assert_eq!(d1, d2);
    }

    #[test]
    fn all_negative_weights_are_provably_zero_under_ibp() {
        let model = CnnModel {
            input_shape: (1, 1, 2),
            layers: vec![
                Layer::Linear {
                    outputs: 2,
                    inputs: 2,
                    weights: vec![-1.0, -0.5, -2.0, -0.1],
                    bias: vec![0.0, 0.0],
                    relu: true,
                },
                Layer::Linear {
                    outputs: 2,
                    inputs: 2,
                    weights: vec![1.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                    relu: false,
                },
            ],
            num_classes: 2,
        };
        model.validate().unwrap();
        let report = ibp_max_density(&model, &InputBox::unit(1, 1, 2)).unwrap();
        // Every first-layer neuron has upper bound <= 0.
        assert_eq!(report.per_layer[0].1, 0.0);
        assert_eq!(report.post_relu_max_density, 0.0);
    }

    #[test]
    fn identity_layer_has_unit_max_density() {
        let model = CnnModel {
            input_shape: (1, 1, 3),
            layers: vec![Layer::Linear {
                outputs: 3,
                inputs: 3,
                weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                bias: vec![0.0; 3],
                relu: false,
            }],
            num_classes: 3,
        };
        let report = ibp_max_density(&model, &InputBox::unit(1, 1, 3)).unwrap();
        assert_eq!(report.per_layer[0].1, 1.0);
    }

    #[test]
    fn ibp_bounds_hold_for_random_images() {
        let model = zoo::reference_cnn();
        let bound = ibp_max_density(&model, &InputBox::unit(1, 8, 8)).unwrap();
        let mut rng = crate::rng_from_seed(5);
        for _ in 0..200 {
            let image = crate::corpus::random_image(&mut rng, 1, 8, 8);
            let (_, _, report) = cnn_forward(&model, &image).unwrap();
            for (emp, max) in report.per_layer.iter().zip(bound.per_layer.iter()) {
                assert!(
                    emp.1 <= max.1 + 1e-12,
                    "layer {} density {} exceeded bound {}",
                    emp.0,
                    emp.1,
                    max.1
                );
            }
            assert!(report.overall_density <= bound.overall_max_density + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = zoo::reference_cnn();
        let mut rng = crate::rng_from_seed(23);
        let image = crate::corpus::random_image(&mut rng, 1, 8, 8);
        let (_, grad) = sponge_loss_grad(&model, &image).unwrap();
        let h = 1e-6;
        for idx in [0usize, 7, 21, 40, 63] {
            let mut plus = image.clone();
            plus.data[idx] += h;
            let mut minus = image.clone();
            minus.data[idx] -= h;
            let fd = (sponge_loss(&model, &plus).unwrap() - sponge_loss(&model, &minus).unwrap())
                / (2.0 * h);
            let denom = fd.abs().max(grad[idx].abs()).max(1e-8);
            assert!(
                (fd - grad[idx]).abs() / denom < 1e-4,
                "pixel {idx}: fd {fd} vs grad {}",
                grad[idx]
            );
        }
    }

    #[test]
    fn class_profile_single_class_mean() {
        let model = zoo::reference_cnn();
        let mut rng = crate::rng_from_seed(31);
        let a = crate::corpus::random_image(&mut rng, 1, 8, 8);
        let b = crate::corpus::random_image(&mut rng, 1, 8, 8);
        let da = cnn_forward(&model, &a).unwrap().2.overall_density;
        let db = cnn_forward(&model, &b).unwrap().2.overall_density;
        let profile = class_density_profile(&model, &[(a, 3), (b, 3)]).unwrap();
        assert_eq!(profile.classes.len(), 1);
        let (class, mean, n) = profile.classes[0];
        assert_eq!(class, 3);
        assert_eq!(n, 2);
        assert!((mean - (da + db) / 2.0).abs() < 1e-12);
        assert!(profile.skipped_classes.contains(&0));
    }

    #[test]
    fn identical_images_have_zero_within_class_variance() {
        let model = zoo::reference_cnn();
        let image = Image::filled(1, 8, 8, 0.4);
        let d = cnn_forward(&model, &image).unwrap().2.overall_density;
        let profile =
            class_density_profile(&model, &[(image.clone(), 1), (image, 1)]).unwrap();
        assert_eq!(profile.classes[0].1, d);
    }

    #[test]
    fn constructed_denser_class_sorts_first() {
        let model = zoo::reference_cnn();
        // Class 0: bright blob-like images; class 1: near-zero images.
        let mut dataset = Vec::new();
        for i in 0..5 {
            let mut bright = Image::filled(1, 8, 8, 0.9);
            bright.data[i] = 1.0;
            dataset.push((bright, 0));
            let mut dark = Image::filled(1, 8, 8, 0.0);
            dark.data[i] = 0.05;
            dataset.push((dark, 1));
        }
        let profile = class_density_profile(&model, &dataset).unwrap();
        assert_eq!(profile.classes[0].0, 0);
        assert!(profile.classes[0].1 > profile.classes[1].1);
    }
}
