//! Reference models and the default vocabulary.
//!
//! Everything here is reproducible: the CNN weights are hand-set constants,
//! translators are generated from a seed, and the default vocabulary is
//! assembled from fixed word and subword lists.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::WORDLIST;
use crate::linalg::Mat;
use crate::nlp::{Alphabet, ModelDims, Subword, ToyTranslator, Vocab};
use crate::vision::{CnnModel, Layer};

/// Multi-character subword inventory of the default vocabulary (continuation
/// and final forms are both registered). Disjoint from [`WORDLIST`].
pub const SUBWORDS: &[&str] = &[
    "th", "he", "er", "re", "nd", "at", "en", "es", "or", "te", "ti", "ed", "st", "ar", "ng",
    "se", "ve", "ra", "ri", "li", "ne", "le", "ro", "de", "ing", "ion", "ent", "ter", "ers",
    "res", "ght", "ver", "all", "est", "tion", "ight", "ound", "ough", "ther", "ward",
];

/// Lowercase letters plus the encodable punctuation set; '?' doubles as the
/// out-of-alphabet fallback.
pub fn default_alphabet() -> Alphabet {
    let mut chars: Vec<char> = ('a'..='z').collect();
    let punctuation = vec!['.', ',', '!', '?', '/', '\'', '-'];
    chars.extend(punctuation.iter().copied());
    Alphabet::new(chars, punctuation, '?').expect("default alphabet is well-formed")
}

/// Both forms of every single alphabet character; the totality floor of any
/// vocabulary over this alphabet.
pub fn single_char_subwords(alphabet: &Alphabet) -> Vec<Subword> {
    let mut out = Vec::with_capacity(alphabet.chars.len() * 2);
    for c in &alphabet.chars {
        out.push(Subword {
            text: c.to_string(),
            continues: false,
        });
        out.push(Subword {
            text: c.to_string(),
            continues: true,
        });
    }
    out
}

/// The documented toy vocabulary: 3 reserved ids, every character in both
/// forms, the multi-character wordlist entries, and the subword inventory
/// (both forms each) — 285 entries total.
pub fn default_vocab() -> Vocab {
    let alphabet = default_alphabet();
    let mut subwords = single_char_subwords(&alphabet);
    for word in WORDLIST.iter().filter(|w| w.len() > 1) {
        subwords.push(Subword {
            text: word.to_string(),
            continues: false,
        });
        subwords.push(Subword {
            text: word.to_string(),
            continues: true,
        });
    }
    for sw in SUBWORDS {
        subwords.push(Subword {
            text: sw.to_string(),
            continues: false,
        });
        subwords.push(Subword {
            text: sw.to_string(),
            continues: true,
        });
    }
    Vocab::new(alphabet, subwords).expect("default vocabulary is well-formed")
}

/// Default translator shape, sized to the default vocabulary.
pub fn default_translator_dims() -> ModelDims {
    ModelDims {
        vocab_size: default_vocab().len(),
        l_ein: 16,
        l_eout: 16,
        d_attn: 16,
        d_ff: 32,
    }
}

fn uniform_mat(rng: &mut crate::SpongeRng, rows: usize, cols: usize, scale: f64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
    m
}

fn uniform_vec(rng: &mut crate::SpongeRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Seeded toy translator with the default dimensions. Weights are random;
/// the length model pulls decode length towards 1.2x the input token count,
/// with content-dependent spread of a few steps.
pub fn toy_translator(seed: u64) -> ToyTranslator {
    toy_translator_with_dims(seed, default_translator_dims())
}

pub fn toy_translator_with_dims(seed: u64, dims: ModelDims) -> ToyTranslator {
    let mut rng = crate::rng_from_seed(seed ^ 0x7355_608d_c0de_c0de);
    let e = dims.l_ein;
    let eo = dims.l_eout;
    let d = dims.d_attn;
    let f = dims.d_ff;
    let v = dims.vocab_size;
    let attn_scale = 1.0 / crate::math::sqrt(d as f64);
    let ff_scale = 1.0 / crate::math::sqrt(f as f64);

    let model = ToyTranslator {
        dims,
        embed_in: uniform_mat(&mut rng, v, e, 0.5),
        enc_wq: uniform_mat(&mut rng, e, d, attn_scale),
        enc_wk: uniform_mat(&mut rng, e, d, attn_scale),
        enc_wv: uniform_mat(&mut rng, e, d, attn_scale),
        enc_wo: uniform_mat(&mut rng, d, e, attn_scale),
        enc_w1: uniform_mat(&mut rng, e, f, attn_scale),
        enc_b1: uniform_vec(&mut rng, f, 0.1),
        enc_w2: uniform_mat(&mut rng, f, e, ff_scale),
        enc_b2: uniform_vec(&mut rng, e, 0.1),
        embed_out: uniform_mat(&mut rng, v, eo, 0.5),
        dec_wq: uniform_mat(&mut rng, eo, d, attn_scale),
        dec_wk: uniform_mat(&mut rng, eo, d, attn_scale),
        dec_wv: uniform_mat(&mut rng, eo, d, attn_scale),
        dec_wo: uniform_mat(&mut rng, d, eo, attn_scale),
        cross_wq: uniform_mat(&mut rng, eo, d, attn_scale),
        cross_wk: uniform_mat(&mut rng, e, d, attn_scale),
        cross_wv: uniform_mat(&mut rng, e, d, attn_scale),
        cross_wo: uniform_mat(&mut rng, d, eo, attn_scale),
        dec_w1: uniform_mat(&mut rng, eo, f, attn_scale),
        dec_b1: uniform_vec(&mut rng, f, 0.1),
        dec_w2: uniform_mat(&mut rng, f, eo, ff_scale),
        dec_b2: uniform_vec(&mut rng, eo, 0.1),
        proj_w: uniform_mat(&mut rng, eo, v, 0.25),
        proj_b: uniform_vec(&mut rng, v, 0.1),
        eos_gain: 2.5,
        eos_target_ratio: 1.2,
        max_decode_factor: 4,
    };
    model.validate().expect("generated translator is well-formed");
    model
}

/// The two-layer reference CNN with hand-set weights: three 3x3 filters
/// (smooth detectors thresholded above the uniform-noise response, plus one
/// all-negative dead filter) into a 10-class linear head. Input 1x8x8.
pub fn reference_cnn() -> CnnModel {
    let mut conv_weights = Vec::with_capacity(3 * 9);
    conv_weights.extend(core::iter::repeat(0.5).take(9));
    conv_weights.extend(core::iter::repeat(0.3).take(9));
    conv_weights.extend(core::iter::repeat(-0.5).take(9));
    let conv_bias = vec![-3.0, -1.5, -0.1];

    let inputs = 3 * 6 * 6;
    let mut linear_weights = Vec::with_capacity(10 * inputs);
    for class in 0..10 {
        for i in 0..inputs {
            let w = if i % 10 == class { 0.15 } else { 0.1 };
            linear_weights.push(w);
        }
    }
    let linear_bias: Vec<f64> = (0..10).map(|k| 0.01 * (k + 1) as f64).collect();

    let model = CnnModel {
        input_shape: (1, 8, 8),
        layers: vec![
            Layer::Conv {
                out_channels: 3,
                in_channels: 1,
                kernel: 3,
                weights: conv_weights,
                bias: conv_bias,
                relu: true,
            },
            Layer::Linear {
                outputs: 10,
                inputs,
                weights: linear_weights,
                bias: linear_bias,
                relu: false,
            },
        ],
        num_classes: 10,
    };
    model.validate().expect("reference CNN is well-formed");
    model
}
