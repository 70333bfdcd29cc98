//! The toy encoder-decoder translator.
//!
//! One encoder layer (single-head self-attention plus a ReLU feed-forward
//! block) and one decoder layer (self-attention over emitted tokens,
//! single-head cross-attention into the encoder states, feed-forward,
//! output projection). Decoding is greedy argmax with lowest-id tie-break.
//!
//! The model is deliberately cache-free: every decode step re-embeds the
//! emitted prefix and re-projects the encoder states for cross-attention
//! keys and values, so per-inference work scales with the product of input
//! tokens, output tokens and both embedding widths. Each decode step lands
//! in the trace as its own entry.
//!
//! Cost accounting counts matmul multiplies only; bias additions, residual
//! additions, softmax exponentials and divisions are free. DRAM traffic per
//! trace entry follows the per-layer full-flush policy with per-tensor
//! compression (see the energy module).

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::energy::{ActivationTrace, AsicCostModel, LayerTraceEntry, TensorWords};
use crate::linalg::{Mat, OpCounter};
use crate::math;
use crate::nlp::vocab::{EOS_ID, PAD_ID};
use crate::nlp::{NlpError, TokenSequence};

/// Static shape parameters of the translator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab_size: usize,
    /// Input embedding width (`l_ein`).
    pub l_ein: usize,
    /// Output embedding width (`l_eout`).
    pub l_eout: usize,
    pub d_attn: usize,
    pub d_ff: usize,
}

/// The four cost-driving dimensions of one completed inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineDims {
    pub l_tin: usize,
    pub l_tout: usize,
    pub l_ein: usize,
    pub l_eout: usize,
}

#[derive(Debug, Clone)]
pub struct ToyTranslator {
    pub dims: ModelDims,
    pub embed_in: Mat,
    pub enc_wq: Mat,
    pub enc_wk: Mat,
    pub enc_wv: Mat,
    pub enc_wo: Mat,
    pub enc_w1: Mat,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Mat,
    pub enc_b2: Vec<f64>,
    pub embed_out: Mat,
    pub dec_wq: Mat,
    pub dec_wk: Mat,
    pub dec_wv: Mat,
    pub dec_wo: Mat,
    pub cross_wq: Mat,
    pub cross_wk: Mat,
    pub cross_wv: Mat,
    pub cross_wo: Mat,
    pub dec_w1: Mat,
    pub dec_b1: Vec<f64>,
    pub dec_w2: Mat,
    pub dec_b2: Vec<f64>,
    pub proj_w: Mat,
    pub proj_b: Vec<f64>,
    /// Length-model strength added to the end-of-sentence logit.
    pub eos_gain: f64,
    /// Decode length (in steps) the length model pulls towards, as a
    /// multiple of the input token count.
    pub eos_target_ratio: f64,
    /// Decode step cap as a multiple of the input token count.
    pub max_decode_factor: usize,
}

impl ToyTranslator {
    /// Decode step cap for a given input token count.
    pub fn max_decode_steps(&self, l_tin: usize) -> usize {
        (self.max_decode_factor * l_tin).max(1)
    }

    /// Verify that all weight shapes chain correctly.
    pub fn validate(&self) -> Result<(), NlpError> {
        let d = &self.dims;
        let ok = self.embed_in.rows == d.vocab_size
            && self.embed_in.cols == d.l_ein
            && self.enc_wq.rows == d.l_ein
            && self.enc_wq.cols == d.d_attn
            && self.enc_wk.rows == d.l_ein
            && self.enc_wk.cols == d.d_attn
            && self.enc_wv.rows == d.l_ein
            && self.enc_wv.cols == d.d_attn
            && self.enc_wo.rows == d.d_attn
            && self.enc_wo.cols == d.l_ein
            && self.enc_w1.rows == d.l_ein
            && self.enc_w1.cols == d.d_ff
            && self.enc_b1.len() == d.d_ff
            && self.enc_w2.rows == d.d_ff
            && self.enc_w2.cols == d.l_ein
            && self.enc_b2.len() == d.l_ein
            && self.embed_out.rows == d.vocab_size
            && self.embed_out.cols == d.l_eout
            && self.dec_wq.rows == d.l_eout
            && self.dec_wq.cols == d.d_attn
            && self.dec_wk.rows == d.l_eout
            && self.dec_wk.cols == d.d_attn
            && self.dec_wv.rows == d.l_eout
            && self.dec_wv.cols == d.d_attn
            && self.dec_wo.rows == d.d_attn
            && self.dec_wo.cols == d.l_eout
            && self.cross_wq.rows == d.l_eout
            && self.cross_wq.cols == d.d_attn
            && self.cross_wk.rows == d.l_ein
            && self.cross_wk.cols == d.d_attn
            && self.cross_wv.rows == d.l_ein
            && self.cross_wv.cols == d.d_attn
            && self.cross_wo.rows == d.d_attn
            && self.cross_wo.cols == d.l_eout
            && self.dec_w1.rows == d.l_eout
            && self.dec_w1.cols == d.d_ff
            && self.dec_b1.len() == d.d_ff
            && self.dec_w2.rows == d.d_ff
            && self.dec_w2.cols == d.l_eout
            && self.dec_b2.len() == d.l_eout
            && self.proj_w.rows == d.l_eout
            && self.proj_w.cols == d.vocab_size
            && self.proj_b.len() == d.vocab_size;
        if ok {
            Ok(())
        } else {
            Err(NlpError::ShapeMismatch)
        }
    }
}

/// Output of one inference.
#[derive(Debug, Clone)]
pub struct Translation {
    /// Emitted tokens, EOS included when decoding terminated naturally.
    /// `source_text` is filled in by the pipeline after detokenization.
    pub output: TokenSequence,
    pub trace: ActivationTrace,
    pub dims: PipelineDims,
    /// Set when the decode-step cap fired before EOS.
    pub truncated: bool,
    /// Mean greedy-token softmax probability across steps.
    pub confidence: f64,
    /// Multiplies spent attending over the encoder states (keys, values,
    /// scores, context), summed over decode steps. Linear in `l_tin` at
    /// fixed decode length.
    pub cross_attention_mults: u64,
}

/// Result of a budget-limited inference.
#[derive(Debug, Clone)]
pub enum BudgetOutcome {
    Completed {
        translation: Translation,
        cost_pj: f64,
    },
    Rejected {
        partial_cost_pj: f64,
        steps_completed: usize,
        trace: ActivationTrace,
    },
}

/// Greedy autoregressive translation with per-step trace instrumentation.
pub fn translate(model: &ToyTranslator, input: &TokenSequence) -> Result<Translation, NlpError> {
    match translate_budgeted(model, input, &AsicCostModel::default(), None)? {
        BudgetOutcome::Completed { translation, .. } => Ok(translation),
        BudgetOutcome::Rejected { .. } => unreachable!("no budget was set"),
    }
}

fn entry_energy(entry: &LayerTraceEntry, cost: &AsicCostModel) -> f64 {
    let mult = if cost.zero_skip_enabled {
        entry.mult_nonzero
    } else {
        entry.mult_total
    };
    let dram = if cost.dram_compress_enabled {
        entry.dram_words_compressed
    } else {
        entry.dram_words_raw
    };
    mult as f64 * cost.fp_mult_energy_pj + dram as f64 * cost.dram_access_energy_pj
}

/// Translation loop shared by the plain and budget-guarded entry points.
/// With a budget, the run aborts as soon as accumulated optimized energy
/// exceeds it, checked after the encoder prelude and after every decode
/// step.
pub fn translate_budgeted(
    model: &ToyTranslator,
    input: &TokenSequence,
    cost: &AsicCostModel,
    budget_pj: Option<f64>,
) -> Result<BudgetOutcome, NlpError> {
    if input.ids.is_empty() {
        return Err(NlpError::EmptyInput);
    }
    let d = &model.dims;
    let t_in = input.ids.len();
    let scale = 1.0 / math::sqrt(d.d_attn as f64);

    let mut trace = ActivationTrace::new();
    let mut spent = 0.0f64;

    // --- Encoder ---------------------------------------------------------
    let x0 = gather(&model.embed_in, &input.ids);
    trace.push(LayerTraceEntry {
        layer_name: "embed_in".to_string(),
        mult_total: 0,
        mult_nonzero: 0,
        act_total: x0.len() as u64,
        act_nonzero: x0.nonzero(),
        dram_words_raw: t_in as u64 + (t_in * d.l_ein) as u64 + x0.len() as u64,
        dram_words_compressed: t_in as u64
            + (t_in * d.l_ein) as u64
            + TensorWords {
                total: x0.len() as u64,
                nonzero: x0.nonzero(),
            }
            .compressed(),
    });

    let mut c = OpCounter::default();
    let q = x0.matmul(&model.enc_wq, &mut c);
    let k = x0.matmul(&model.enc_wk, &mut c);
    let v = x0.matmul(&model.enc_wv, &mut c);
    let mut scores = q.matmul_bt(&k, &mut c);
    scores.softmax_rows(scale);
    let ctx = scores.matmul(&v, &mut c);
    let mut x1 = ctx.matmul(&model.enc_wo, &mut c);
    x1.add(&x0);
    trace.push(layer_entry(
        "encoder_attn",
        c,
        &x0,
        (4 * d.l_ein * d.d_attn) as u64,
        &x1,
    ));

    let mut c = OpCounter::default();
    let mut hidden = x1.matmul(&model.enc_w1, &mut c);
    hidden.add_row_bias(&model.enc_b1);
    hidden.relu();
    let mut x2 = hidden.matmul(&model.enc_w2, &mut c);
    x2.add_row_bias(&model.enc_b2);
    x2.add(&x1);
    trace.push(layer_entry(
        "encoder_ffn",
        c,
        &x1,
        (d.l_ein * d.d_ff + d.d_ff + d.d_ff * d.l_ein + d.l_ein) as u64,
        &x2,
    ));

    if let Some(budget) = budget_pj {
        for entry in &trace.layers {
            spent += entry_energy(entry, cost);
        }
        if spent > budget {
            return Ok(BudgetOutcome::Rejected {
                partial_cost_pj: spent,
                steps_completed: 0,
                trace,
            });
        }
    }

    // --- Decoder ---------------------------------------------------------
    let enc_words = TensorWords {
        total: x2.len() as u64,
        nonzero: x2.nonzero(),
    };
    let step_weight_words = |prefix_len: usize| -> u64 {
        (prefix_len * d.l_eout
            + 3 * d.l_eout * d.d_attn
            + d.d_attn * d.l_eout
            + d.l_eout * d.d_attn
            + 2 * d.l_ein * d.d_attn
            + d.d_attn * d.l_eout
            + d.l_eout * d.d_ff
            + d.d_ff
            + d.d_ff * d.l_eout
            + d.l_eout
            + d.l_eout * d.vocab_size
            + d.vocab_size) as u64
    };

    // EOS doubles as the begin-of-sequence sentinel.
    let mut decoded: Vec<u32> = vec![EOS_ID];
    let mut output: Vec<u32> = Vec::new();
    let cap = model.max_decode_steps(t_in);
    let mut truncated = false;
    let mut confidence_sum = 0.0;
    let mut cross_attention_mults = 0u64;
    let mut steps = 0usize;

    loop {
        let step = steps + 1;
        let prefix_len = decoded.len();
        let mut c = OpCounter::default();

        let y_emb = gather(&model.embed_out, &decoded);
        let y_last = y_emb.row_mat(prefix_len - 1);

        // Decoder self-attention (current position over the emitted prefix).
        let q_self = y_last.matmul(&model.dec_wq, &mut c);
        let k_self = y_emb.matmul(&model.dec_wk, &mut c);
        let v_self = y_emb.matmul(&model.dec_wv, &mut c);
        let mut s_self = q_self.matmul_bt(&k_self, &mut c);
        s_self.softmax_rows(scale);
        let ctx_self = s_self.matmul(&v_self, &mut c);
        let mut h = ctx_self.matmul(&model.dec_wo, &mut c);
        h.add(&y_last);

        // Cross-attention over the encoder states; keys and values are
        // re-projected every step.
        let mut cx = OpCounter::default();
        let q_cross = h.matmul(&model.cross_wq, &mut c);
        let k_cross = x2.matmul(&model.cross_wk, &mut cx);
        let v_cross = x2.matmul(&model.cross_wv, &mut cx);
        let mut s_cross = q_cross.matmul_bt(&k_cross, &mut cx);
        s_cross.softmax_rows(scale);
        let ctx_cross = s_cross.matmul(&v_cross, &mut cx);
        cross_attention_mults += cx.mult_total;
        c.mult_total += cx.mult_total;
        c.mult_nonzero += cx.mult_nonzero;
        let mut h2 = ctx_cross.matmul(&model.cross_wo, &mut c);
        h2.add(&h);

        let mut f = h2.matmul(&model.dec_w1, &mut c);
        f.add_row_bias(&model.dec_b1);
        f.relu();
        let mut h3 = f.matmul(&model.dec_w2, &mut c);
        h3.add_row_bias(&model.dec_b2);
        h3.add(&h2);

        let mut logits = h3.matmul(&model.proj_w, &mut c);
        logits.add_row_bias(&model.proj_b);
        logits.data[EOS_ID as usize] +=
            model.eos_gain * (step as f64 - model.eos_target_ratio * t_in as f64);
        logits.data[PAD_ID as usize] = f64::NEG_INFINITY;

        let next = argmax_lowest_id(&logits.data);
        confidence_sum += softmax_prob(&logits.data, next);

        let logits_words = TensorWords {
            total: logits.len() as u64,
            nonzero: logits.nonzero(),
        };
        trace.push(LayerTraceEntry {
            layer_name: alloc::format!("dec_step_{step}"),
            mult_total: c.mult_total,
            mult_nonzero: c.mult_nonzero,
            act_total: logits_words.total,
            act_nonzero: logits_words.nonzero,
            dram_words_raw: enc_words.total
                + prefix_len as u64
                + step_weight_words(prefix_len)
                + logits_words.total
                + 1,
            dram_words_compressed: enc_words.compressed()
                + prefix_len as u64
                + step_weight_words(prefix_len)
                + logits_words.compressed()
                + 1,
        });

        steps += 1;
        output.push(next as u32);
        decoded.push(next as u32);

        if let Some(budget) = budget_pj {
            spent += entry_energy(trace.layers.last().unwrap(), cost);
            if spent > budget {
                return Ok(BudgetOutcome::Rejected {
                    partial_cost_pj: spent,
                    steps_completed: steps,
                    trace,
                });
            }
        }

        if next as u32 == EOS_ID {
            break;
        }
        if steps >= cap {
            truncated = true;
            break;
        }
    }

    let dims = PipelineDims {
        l_tin: t_in,
        l_tout: steps,
        l_ein: d.l_ein,
        l_eout: d.l_eout,
    };
    let translation = Translation {
        output: TokenSequence {
            ids: output,
            source_text: String::new(),
        },
        trace,
        dims,
        truncated,
        confidence: confidence_sum / steps as f64,
        cross_attention_mults,
    };
    let cost_pj = if budget_pj.is_some() {
        spent
    } else {
        translation
            .trace
            .layers
            .iter()
            .map(|e| entry_energy(e, cost))
            .sum()
    };
    Ok(BudgetOutcome::Completed {
        translation,
        cost_pj,
    })
}

/// Closed-form nominal multiply count of one inference, as a function of the
/// pipeline dimensions. Matches the instrumented trace exactly; this is the
/// white-box cost estimator used as a GA fitness.
pub fn pipeline_cost_estimate(dims: &PipelineDims, model: &ToyTranslator) -> u64 {
    let t = dims.l_tin as u64;
    let s = dims.l_tout as u64;
    let e = model.dims.l_ein as u64;
    let eo = model.dims.l_eout as u64;
    let d = model.dims.d_attn as u64;
    let f = model.dims.d_ff as u64;
    let v = model.dims.vocab_size as u64;

    let encoder = 4 * t * e * d + 2 * t * t * d + 2 * t * e * f;
    // Per decode step at prefix length p: self-attention keys/values over p
    // positions plus fixed-size projections, cross-attention over t encoder
    // states, feed-forward and vocabulary projection.
    let per_step_fixed = 4 * eo * d + 2 * t * d * (e + 1) + 2 * eo * f + eo * v;
    let prefix_sum = s * (s + 1) / 2;
    let decoder = 2 * d * (eo + 1) * prefix_sum + s * per_step_fixed;
    encoder + decoder
}

fn gather(table: &Mat, ids: &[u32]) -> Mat {
    let mut out = Mat::zeros(ids.len(), table.cols);
    for (r, &id) in ids.iter().enumerate() {
        let row = table.row(id as usize % table.rows);
        out.data[r * table.cols..(r + 1) * table.cols].copy_from_slice(row);
    }
    out
}

fn layer_entry(name: &str, c: OpCounter, input: &Mat, weight_words: u64, output: &Mat) -> LayerTraceEntry {
    let input_words = TensorWords {
        total: input.len() as u64,
        nonzero: input.nonzero(),
    };
    let output_words = TensorWords {
        total: output.len() as u64,
        nonzero: output.nonzero(),
    };
    LayerTraceEntry {
        layer_name: name.to_string(),
        mult_total: c.mult_total,
        mult_nonzero: c.mult_nonzero,
        act_total: output_words.total,
        act_nonzero: output_words.nonzero,
        dram_words_raw: input_words.total + weight_words + output_words.total,
        dram_words_compressed: input_words.compressed() + weight_words + output_words.compressed(),
    }
}

fn argmax_lowest_id(values: &[f64]) -> usize {
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

fn softmax_prob(logits: &[f64], index: usize) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &v in logits {
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        return 1.0;
    }
    let mut sum = 0.0;
    for &v in logits {
        if v.is_finite() {
            sum += math::exp(v - max);
        }
    }
    math::exp(logits[index] - max) / sum
}
