//! Stable text file formats.
//!
//! Every format is line-oriented UTF-8 with a versioned header line, and
//! every file written by an experiment embeds the config hash and seed it
//! came from:
//!
//! ```text
//! # spongelab-<kind> v1 config=<hash> seed=<seed>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! save/load is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sponge_core::attacks::GenerationStats;
use sponge_core::defense::{ConsumptionProfile, CostSource};
use sponge_core::energy::{ActivationTrace, EnergyReport, LayerTraceEntry};
use sponge_core::linalg::Mat;
use sponge_core::nlp::{ModelDims, Subword, ToyTranslator, Vocab};
use sponge_core::vision::{CnnModel, Image, Layer};
use sponge_core::zoo;
use thiserror::Error;

/// Config hash and seed stamped into every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header(&self, kind: &str) -> String {
        format!(
            "# spongelab-{kind} v1 config={} seed={}\n",
            self.config_hash, self.seed
        )
    }

    pub fn anonymous() -> Self {
        Provenance {
            config_hash: "none".to_string(),
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line: line + 1,
        message: message.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, content: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    fs::write(path, content).map_err(|e| io_err(path, e))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64, FormatError> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad float {s:?}")))
}

fn parse_u64(path: &Path, line: usize, s: &str) -> Result<u64, FormatError> {
    s.parse::<u64>()
        .map_err(|_| parse_err(path, line, format!("bad integer {s:?}")))
}

/// Skip blank lines and `#` comments.
fn content_lines(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

// --- Vocabulary -----------------------------------------------------------

/// One subword per line, id = line number. The three reserved ids lead as
/// `<pad>`, `<eos>`, `<unk>`; continuation subwords carry a trailing `@@`.
/// The first content line declares the alphabet.
pub fn save_vocab(path: &Path, vocab: &Vocab) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("# spongelab-vocab v1\n");
    let alphabet = vocab.alphabet();
    writeln!(
        out,
        "alphabet {} punct {} fallback {}",
        alphabet.chars.iter().collect::<String>(),
        alphabet.punctuation.iter().collect::<String>(),
        alphabet.fallback
    )
    .unwrap();
    for entry in vocab.entries() {
        if entry.continues {
            writeln!(out, "{}@@", entry.text).unwrap();
        } else {
            writeln!(out, "{}", entry.text).unwrap();
        }
    }
    write_file(path, &out)
}

pub fn load_vocab(path: &Path) -> Result<Vocab, FormatError> {
    let lines = read_lines(path)?;
    let mut iter = content_lines(&lines);
    let (i, header) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing alphabet line"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "alphabet" || parts[2] != "punct" || parts[4] != "fallback" {
        return Err(parse_err(path, i, "malformed alphabet line"));
    }
    let chars: Vec<char> = parts[1].chars().collect();
    let punct: Vec<char> = parts[3].chars().collect();
    let fallback = parts[5]
        .chars()
        .next()
        .ok_or_else(|| parse_err(path, i, "missing fallback character"))?;
    let alphabet = sponge_core::nlp::Alphabet::new(chars, punct, fallback)
        .map_err(|e| parse_err(path, i, e.to_string()))?;

    let mut subwords = Vec::new();
    for (i, line) in iter {
        match line {
            "<pad>" | "<eos>" | "<unk>" => continue,
            _ => {}
        }
        let (text, continues) = match line.strip_suffix("@@") {
            Some(stem) => (stem, true),
            None => (line, false),
        };
        if text.is_empty() {
            return Err(parse_err(path, i, "empty subword"));
        }
        subwords.push(Subword {
            text: text.to_string(),
            continues,
        });
    }
    Vocab::new(alphabet, subwords).map_err(|e| FormatError::Invalid(e.to_string()))
}

// --- Model checkpoints ------------------------------------------------------

fn write_tensor(out: &mut String, name: &str, dims: &[usize], data: &[f64]) {
    write!(out, "tensor {name}").unwrap();
    for d in dims {
        write!(out, " {d}").unwrap();
    }
    out.push('\n');
    for (i, v) in data.iter().enumerate() {
        if i > 0 {
            out.push(if i % 16 == 0 { '\n' } else { ' ' });
        }
        write!(out, "{v:?}").unwrap();
    }
    if !data.is_empty() {
        out.push('\n');
    }
}

struct TensorReader<'a> {
    path: &'a Path,
    entries: Vec<(String, Vec<usize>, Vec<f64>)>,
    cursor: usize,
}

impl<'a> TensorReader<'a> {
    fn parse(path: &'a Path, lines: &[String], skip: usize) -> Result<Self, FormatError> {
        let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        for (i, line) in content_lines(lines).skip(skip) {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| parse_err(path, i, "missing tensor name"))?
                    .to_string();
                let mut dims = Vec::new();
                for p in parts {
                    dims.push(parse_u64(path, i, p)? as usize);
                }
                entries.push((name, dims, Vec::new()));
            } else {
                let entry = entries
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i, "data before any tensor header"))?;
                for tok in line.split_whitespace() {
                    entry.2.push(parse_f64(path, i, tok)?);
                }
            }
        }
        for (name, dims, data) in &entries {
            let expected: usize = dims.iter().product();
            if *dims != [0] && data.len() != expected {
                return Err(FormatError::Invalid(format!(
                    "tensor {name}: expected {expected} values, found {}",
                    data.len()
                )));
            }
        }
        Ok(TensorReader {
            path,
            entries,
            cursor: 0,
        })
    }

    fn next(&mut self, expect_name: &str) -> Result<(Vec<usize>, Vec<f64>), FormatError> {
        let (name, dims, data) = self
            .entries
            .get(self.cursor)
            .ok_or_else(|| FormatError::Invalid(format!("missing tensor {expect_name}")))?;
        if name != expect_name {
            return Err(FormatError::Invalid(format!(
                "{}: expected tensor {expect_name}, found {name}",
                self.path.display()
            )));
        }
        self.cursor += 1;
        Ok((dims.clone(), data.clone()))
    }
}

const TRANSLATOR_TENSORS: &[&str] = &[
    "embed_in", "enc_wq", "enc_wk", "enc_wv", "enc_wo", "enc_w1", "enc_b1", "enc_w2", "enc_b2",
    "embed_out", "dec_wq", "dec_wk", "dec_wv", "dec_wo", "cross_wq", "cross_wk", "cross_wv",
    "cross_wo", "dec_w1", "dec_b1", "dec_w2", "dec_b2", "proj_w", "proj_b",
];

/// Versioned structured-text checkpoint of a translator.
pub fn save_translator(path: &Path, model: &ToyTranslator) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("# spongelab-checkpoint v1\n");
    out.push_str("kind translator\n");
    let d = &model.dims;
    writeln!(
        out,
        "dims vocab {} l_ein {} l_eout {} d_attn {} d_ff {}",
        d.vocab_size, d.l_ein, d.l_eout, d.d_attn, d.d_ff
    )
    .unwrap();
    writeln!(
        out,
        "length_model eos_gain {:?} eos_target_ratio {:?} max_decode_factor {}",
        model.eos_gain, model.eos_target_ratio, model.max_decode_factor
    )
    .unwrap();

    let mats: Vec<(&str, &Mat)> = vec![
        ("embed_in", &model.embed_in),
        ("enc_wq", &model.enc_wq),
        ("enc_wk", &model.enc_wk),
        ("enc_wv", &model.enc_wv),
        ("enc_wo", &model.enc_wo),
        ("enc_w1", &model.enc_w1),
    ];
    for (name, m) in mats {
        write_tensor(&mut out, name, &[m.rows, m.cols], &m.data);
    }
    write_tensor(&mut out, "enc_b1", &[model.enc_b1.len()], &model.enc_b1);
    write_tensor(
        &mut out,
        "enc_w2",
        &[model.enc_w2.rows, model.enc_w2.cols],
        &model.enc_w2.data,
    );
    write_tensor(&mut out, "enc_b2", &[model.enc_b2.len()], &model.enc_b2);
    let mats: Vec<(&str, &Mat)> = vec![
        ("embed_out", &model.embed_out),
        ("dec_wq", &model.dec_wq),
        ("dec_wk", &model.dec_wk),
        ("dec_wv", &model.dec_wv),
        ("dec_wo", &model.dec_wo),
        ("cross_wq", &model.cross_wq),
        ("cross_wk", &model.cross_wk),
        ("cross_wv", &model.cross_wv),
        ("cross_wo", &model.cross_wo),
        ("dec_w1", &model.dec_w1),
    ];
    for (name, m) in mats {
        write_tensor(&mut out, name, &[m.rows, m.cols], &m.data);
    }
    write_tensor(&mut out, "dec_b1", &[model.dec_b1.len()], &model.dec_b1);
    write_tensor(
        &mut out,
        "dec_w2",
        &[model.dec_w2.rows, model.dec_w2.cols],
        &model.dec_w2.data,
    );
    write_tensor(&mut out, "dec_b2", &[model.dec_b2.len()], &model.dec_b2);
    write_tensor(
        &mut out,
        "proj_w",
        &[model.proj_w.rows, model.proj_w.cols],
        &model.proj_w.data,
    );
    write_tensor(&mut out, "proj_b", &[model.proj_b.len()], &model.proj_b);
    write_file(path, &out)
}

pub fn load_translator(path: &Path) -> Result<ToyTranslator, FormatError> {
    let lines = read_lines(path)?;
    let mut header = content_lines(&lines);
    let (i, kind) = header
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty checkpoint"))?;
    if kind != "kind translator" {
        return Err(parse_err(path, i, format!("expected translator, got {kind:?}")));
    }
    let (i, dims_line) = header
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing dims"))?;
    let d: Vec<&str> = dims_line.split_whitespace().collect();
    if d.len() != 11 || d[0] != "dims" {
        return Err(parse_err(path, i, "malformed dims line"));
    }
    let dims = ModelDims {
        vocab_size: parse_u64(path, i, d[2])? as usize,
        l_ein: parse_u64(path, i, d[4])? as usize,
        l_eout: parse_u64(path, i, d[6])? as usize,
        d_attn: parse_u64(path, i, d[8])? as usize,
        d_ff: parse_u64(path, i, d[10])? as usize,
    };
    let (i, lm_line) = header
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing length_model"))?;
    let lm: Vec<&str> = lm_line.split_whitespace().collect();
    if lm.len() != 7 || lm[0] != "length_model" {
        return Err(parse_err(path, i, "malformed length_model line"));
    }
    let eos_gain = parse_f64(path, i, lm[2])?;
    let eos_target_ratio = parse_f64(path, i, lm[4])?;
    let max_decode_factor = parse_u64(path, i, lm[6])? as usize;

    let mut reader = TensorReader::parse(path, &lines, 3)?;

    fn mat(reader: &mut TensorReader, name: &str) -> Result<Mat, FormatError> {
        let (dims, data) = reader.next(name)?;
        if dims.len() != 2 {
            return Err(FormatError::Invalid(format!("tensor {name} is not 2-d")));
        }
        Ok(Mat::from_rows(dims[0], dims[1], data))
    }

    fn vector(reader: &mut TensorReader, name: &str) -> Result<Vec<f64>, FormatError> {
        Ok(reader.next(name)?.1)
    }

    let embed_in = mat(&mut reader, "embed_in")?;
    let enc_wq = mat(&mut reader, "enc_wq")?;
    let enc_wk = mat(&mut reader, "enc_wk")?;
    let enc_wv = mat(&mut reader, "enc_wv")?;
    let enc_wo = mat(&mut reader, "enc_wo")?;
    let enc_w1 = mat(&mut reader, "enc_w1")?;
    let enc_b1 = vector(&mut reader, "enc_b1")?;
    let enc_w2 = mat(&mut reader, "enc_w2")?;
    let enc_b2 = vector(&mut reader, "enc_b2")?;
    let embed_out = mat(&mut reader, "embed_out")?;
    let dec_wq = mat(&mut reader, "dec_wq")?;
    let dec_wk = mat(&mut reader, "dec_wk")?;
    let dec_wv = mat(&mut reader, "dec_wv")?;
    let dec_wo = mat(&mut reader, "dec_wo")?;
    let cross_wq = mat(&mut reader, "cross_wq")?;
    let cross_wk = mat(&mut reader, "cross_wk")?;
    let cross_wv = mat(&mut reader, "cross_wv")?;
    let cross_wo = mat(&mut reader, "cross_wo")?;
    let dec_w1 = mat(&mut reader, "dec_w1")?;
    let dec_b1 = vector(&mut reader, "dec_b1")?;
    let dec_w2 = mat(&mut reader, "dec_w2")?;
    let dec_b2 = vector(&mut reader, "dec_b2")?;
    let proj_w = mat(&mut reader, "proj_w")?;
    let proj_b = vector(&mut reader, "proj_b")?;

    let model = ToyTranslator {
        dims,
        embed_in,
        enc_wq,
        enc_wk,
        enc_wv,
        enc_wo,
        enc_w1,
        enc_b1,
        enc_w2,
        enc_b2,
        embed_out,
        dec_wq,
        dec_wk,
        dec_wv,
        dec_wo,
        cross_wq,
        cross_wk,
        cross_wv,
        cross_wo,
        dec_w1,
        dec_b1,
        dec_w2,
        dec_b2,
        proj_w,
        proj_b,
        eos_gain,
        eos_target_ratio,
        max_decode_factor,
    };
    model
        .validate()
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    debug_assert_eq!(TRANSLATOR_TENSORS.len(), 24);
    Ok(model)
}

/// Versioned structured-text checkpoint of a CNN.
pub fn save_cnn(path: &Path, model: &CnnModel) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str("# spongelab-checkpoint v1\n");
    out.push_str("kind cnn\n");
    writeln!(
        out,
        "input {} {} {} classes {}",
        model.input_shape.0, model.input_shape.1, model.input_shape.2, model.num_classes
    )
    .unwrap();
    for (i, layer) in model.layers.iter().enumerate() {
        match layer {
            Layer::Conv {
                out_channels,
                in_channels,
                kernel,
                weights,
                bias,
                relu,
            } => {
                writeln!(out, "layer conv relu {}", if *relu { 1 } else { 0 }).unwrap();
                write_tensor(
                    &mut out,
                    &format!("conv{i}_w"),
                    &[*out_channels, *in_channels, *kernel, *kernel],
                    weights,
                );
                write_tensor(&mut out, &format!("conv{i}_b"), &[bias.len()], bias);
            }
            Layer::Linear {
                outputs,
                inputs,
                weights,
                bias,
                relu,
            } => {
                writeln!(out, "layer linear relu {}", if *relu { 1 } else { 0 }).unwrap();
                write_tensor(
                    &mut out,
                    &format!("linear{i}_w"),
                    &[*outputs, *inputs],
                    weights,
                );
                write_tensor(&mut out, &format!("linear{i}_b"), &[bias.len()], bias);
            }
        }
    }
    write_file(path, &out)
}

pub fn load_cnn(path: &Path) -> Result<CnnModel, FormatError> {
    let lines = read_lines(path)?;
    let mut iter = content_lines(&lines).peekable();
    let (i, kind) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty checkpoint"))?;
    if kind != "kind cnn" {
        return Err(parse_err(path, i, format!("expected cnn, got {kind:?}")));
    }
    let (i, input_line) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing input line"))?;
    let p: Vec<&str> = input_line.split_whitespace().collect();
    if p.len() != 6 || p[0] != "input" || p[4] != "classes" {
        return Err(parse_err(path, i, "malformed input line"));
    }
    let input_shape = (
        parse_u64(path, i, p[1])? as usize,
        parse_u64(path, i, p[2])? as usize,
        parse_u64(path, i, p[3])? as usize,
    );
    let num_classes = parse_u64(path, i, p[5])? as usize;

    let mut layers = Vec::new();
    let mut pending_kind: Option<(String, bool)> = None;
    let mut tensors: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    let flush = |pending: &mut Option<(String, bool)>,
                     tensors: &mut Vec<(Vec<usize>, Vec<f64>)>|
     -> Result<Option<Layer>, FormatError> {
        let Some((kind, relu)) = pending.take() else {
            return Ok(None);
        };
        if tensors.len() != 2 {
            return Err(FormatError::Invalid(format!(
                "layer {kind}: expected weight and bias tensors, found {}",
                tensors.len()
            )));
        }
        let (w_dims, w) = tensors.remove(0);
        let (_, b) = tensors.remove(0);
        let layer = match kind.as_str() {
            "conv" => {
                if w_dims.len() != 4 || w_dims[2] != w_dims[3] {
                    return Err(FormatError::Invalid("conv weights must be 4-d square".into()));
                }
                Layer::Conv {
                    out_channels: w_dims[0],
                    in_channels: w_dims[1],
                    kernel: w_dims[2],
                    weights: w,
                    bias: b,
                    relu,
                }
            }
            "linear" => {
                if w_dims.len() != 2 {
                    return Err(FormatError::Invalid("linear weights must be 2-d".into()));
                }
                Layer::Linear {
                    outputs: w_dims[0],
                    inputs: w_dims[1],
                    weights: w,
                    bias: b,
                    relu,
                }
            }
            other => return Err(FormatError::Invalid(format!("unknown layer kind {other}"))),
        };
        Ok(Some(layer))
    };

    for (i, line) in iter {
        if let Some(rest) = line.strip_prefix("layer ") {
            if let Some(layer) = flush(&mut pending_kind, &mut tensors)? {
                layers.push(layer);
            }
            let p: Vec<&str> = rest.split_whitespace().collect();
            if p.len() != 3 || p[1] != "relu" {
                return Err(parse_err(path, i, "malformed layer line"));
            }
            pending_kind = Some((p[0].to_string(), p[2] == "1"));
        } else if let Some(rest) = line.strip_prefix("tensor ") {
            let mut parts = rest.split_whitespace();
            let _name = parts.next();
            let mut dims = Vec::new();
            for d in parts {
                dims.push(parse_u64(path, i, d)? as usize);
            }
            tensors.push((dims, Vec::new()));
        } else {
            let t = tensors
                .last_mut()
                .ok_or_else(|| parse_err(path, i, "data before tensor header"))?;
            for tok in line.split_whitespace() {
                t.1.push(parse_f64(path, i, tok)?);
            }
        }
    }
    if let Some(layer) = flush(&mut pending_kind, &mut tensors)? {
        layers.push(layer);
    }

    let model = CnnModel {
        input_shape,
        layers,
        num_classes,
    };
    model
        .validate()
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(model)
}

// --- Traces and reports -----------------------------------------------------

/// One layer per line: name plus the six counts.
pub fn save_trace(path: &Path, trace: &ActivationTrace, prov: &Provenance) -> Result<(), FormatError> {
    let mut out = prov.header("trace");
    out.push_str("# layer mult_total mult_nonzero act_total act_nonzero dram_raw dram_compressed\n");
    for l in &trace.layers {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            l.layer_name,
            l.mult_total,
            l.mult_nonzero,
            l.act_total,
            l.act_nonzero,
            l.dram_words_raw,
            l.dram_words_compressed
        )
        .unwrap();
    }
    write_file(path, &out)
}

pub fn load_trace(path: &Path) -> Result<ActivationTrace, FormatError> {
    let lines = read_lines(path)?;
    let mut trace = ActivationTrace::new();
    for (i, line) in content_lines(&lines) {
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 7 {
            return Err(parse_err(path, i, "expected 7 fields"));
        }
        trace.push(LayerTraceEntry {
            layer_name: p[0].to_string(),
            mult_total: parse_u64(path, i, p[1])?,
            mult_nonzero: parse_u64(path, i, p[2])?,
            act_total: parse_u64(path, i, p[3])?,
            act_nonzero: parse_u64(path, i, p[4])?,
            dram_words_raw: parse_u64(path, i, p[5])?,
            dram_words_compressed: parse_u64(path, i, p[6])?,
        });
    }
    trace.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(trace)
}

/// Structured key = value energy report; energies in both pJ and mJ.
pub fn save_report(path: &Path, report: &EnergyReport, prov: &Provenance) -> Result<(), FormatError> {
    let mut out = prov.header("energy-report");
    writeln!(out, "energy_optimized_pj = {:?}", report.energy_optimized_pj).unwrap();
    writeln!(out, "energy_unoptimized_pj = {:?}", report.energy_unoptimized_pj).unwrap();
    writeln!(out, "energy_optimized_mj = {:?}", report.energy_optimized_mj()).unwrap();
    writeln!(out, "energy_unoptimized_mj = {:?}", report.energy_unoptimized_mj()).unwrap();
    writeln!(out, "energy_ratio = {:?}", report.energy_ratio).unwrap();
    writeln!(out, "mult_total = {}", report.mult_total).unwrap();
    writeln!(out, "mult_nonzero = {}", report.mult_nonzero).unwrap();
    writeln!(out, "act_total = {}", report.act_total).unwrap();
    writeln!(out, "act_nonzero = {}", report.act_nonzero).unwrap();
    writeln!(out, "dram_words_raw = {}", report.dram_words_raw).unwrap();
    writeln!(out, "dram_words_compressed = {}", report.dram_words_compressed).unwrap();
    write_file(path, &out)
}

// --- Images and datasets ----------------------------------------------------

/// Flat float array with a shape header.
pub fn save_image(path: &Path, image: &Image) -> Result<(), FormatError> {
    let mut out = String::from("# spongelab-image v1\n");
    writeln!(out, "shape {} {} {}", image.channels, image.height, image.width).unwrap();
    for (i, v) in image.data.iter().enumerate() {
        if i > 0 {
            out.push(if i % image.width == 0 { '\n' } else { ' ' });
        }
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
    write_file(path, &out)
}

pub fn load_image(path: &Path) -> Result<Image, FormatError> {
    let lines = read_lines(path)?;
    let mut iter = content_lines(&lines);
    let (i, shape_line) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing shape line"))?;
    let p: Vec<&str> = shape_line.split_whitespace().collect();
    if p.len() != 4 || p[0] != "shape" {
        return Err(parse_err(path, i, "malformed shape line"));
    }
    let (c, h, w) = (
        parse_u64(path, i, p[1])? as usize,
        parse_u64(path, i, p[2])? as usize,
        parse_u64(path, i, p[3])? as usize,
    );
    let mut data = Vec::with_capacity(c * h * w);
    for (i, line) in iter {
        for tok in line.split_whitespace() {
            data.push(parse_f64(path, i, tok)?);
        }
    }
    if data.len() != c * h * w {
        return Err(FormatError::Invalid(format!(
            "{}: expected {} values, found {}",
            path.display(),
            c * h * w,
            data.len()
        )));
    }
    Ok(Image {
        channels: c,
        height: h,
        width: w,
        data,
    })
}

/// Dataset directory layout: `<root>/class_<k>/<name>.img`.
pub fn save_dataset(root: &Path, dataset: &[(Image, usize)]) -> Result<(), FormatError> {
    let mut counters = std::collections::HashMap::new();
    for (image, label) in dataset {
        let n = counters.entry(*label).or_insert(0usize);
        let path = root.join(format!("class_{label}")).join(format!("img_{n:04}.img"));
        save_image(&path, image)?;
        *n += 1;
    }
    Ok(())
}

pub fn load_dataset(root: &Path) -> Result<Vec<(Image, usize)>, FormatError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    let mut class_dirs: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(root, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(idx) = name.strip_prefix("class_") {
            if let Ok(label) = idx.parse::<usize>() {
                class_dirs.push((label, entry.path()));
            }
        }
    }
    class_dirs.sort();
    for (label, dir) in class_dirs {
        let mut files: Vec<std::path::PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io_err(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "img").unwrap_or(false))
            .collect();
        files.sort();
        for file in files {
            out.push((load_image(&file)?, label));
        }
    }
    Ok(out)
}

// --- Profiles ----------------------------------------------------------------

pub fn save_profile(
    path: &Path,
    profile: &ConsumptionProfile,
    prov: &Provenance,
) -> Result<(), FormatError> {
    let mut out = prov.header("profile");
    match profile.source {
        CostSource::SimulatedEnergy => out.push_str("source simulated-energy\n"),
        CostSource::SimulatedLatency {
            base_s,
            seconds_per_pj,
        } => {
            writeln!(out, "source simulated-latency {base_s:?} {seconds_per_pj:?}").unwrap();
        }
    }
    writeln!(out, "percentile {:?}", profile.percentile).unwrap();
    writeln!(out, "threshold {:?}", profile.threshold).unwrap();
    for c in &profile.costs {
        writeln!(out, "{c:?}").unwrap();
    }
    write_file(path, &out)
}

pub fn load_profile(path: &Path) -> Result<ConsumptionProfile, FormatError> {
    let lines = read_lines(path)?;
    let mut iter = content_lines(&lines);
    let (i, source_line) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing source line"))?;
    let p: Vec<&str> = source_line.split_whitespace().collect();
    let source = match (p.first(), p.get(1)) {
        (Some(&"source"), Some(&"simulated-energy")) => CostSource::SimulatedEnergy,
        (Some(&"source"), Some(&"simulated-latency")) if p.len() == 4 => {
            CostSource::SimulatedLatency {
                base_s: parse_f64(path, i, p[2])?,
                seconds_per_pj: parse_f64(path, i, p[3])?,
            }
        }
        _ => return Err(parse_err(path, i, "malformed source line")),
    };
    let (i, pct_line) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing percentile"))?;
    let percentile = parse_f64(
        path,
        i,
        pct_line
            .strip_prefix("percentile ")
            .ok_or_else(|| parse_err(path, i, "malformed percentile line"))?,
    )?;
    let (i, thr_line) = iter
        .next()
        .ok_or_else(|| parse_err(path, 0, "missing threshold"))?;
    let threshold = parse_f64(
        path,
        i,
        thr_line
            .strip_prefix("threshold ")
            .ok_or_else(|| parse_err(path, i, "malformed threshold line"))?,
    )?;
    let mut costs = Vec::new();
    for (i, line) in iter {
        costs.push(parse_f64(path, i, line)?);
    }
    Ok(ConsumptionProfile {
        costs,
        percentile,
        threshold,
        source,
    })
}

// --- GA history and plot data -------------------------------------------------

/// Tab-separated history: generation, best, mean, source, failures.
pub fn save_history(
    path: &Path,
    history: &[GenerationStats],
    prov: &Provenance,
) -> Result<(), FormatError> {
    let mut out = prov.header("ga-history");
    out.push_str("generation\tbest\tmean\tsource\tfailures\n");
    for h in history {
        writeln!(
            out,
            "{}\t{:?}\t{:?}\t{}\t{}",
            h.generation,
            h.best,
            h.mean,
            h.source.as_str(),
            h.failures
        )
        .unwrap();
    }
    write_file(path, &out)
}

/// Plain tabular plot data: an x column followed by named value columns.
/// All series must be nonempty and the same length.
pub fn emit_plot_data(
    path: &Path,
    x_label: &str,
    x: &[f64],
    series: &[(&str, Vec<f64>)],
    prov: &Provenance,
) -> Result<(), FormatError> {
    if x.is_empty() || series.is_empty() {
        return Err(FormatError::Invalid("plot data must be nonempty".into()));
    }
    for (name, values) in series {
        if values.len() != x.len() {
            return Err(FormatError::Invalid(format!(
                "series {name} length {} does not match x length {}",
                values.len(),
                x.len()
            )));
        }
    }
    let mut out = prov.header("plot-data");
    write!(out, "{x_label}").unwrap();
    for (name, _) in series {
        write!(out, "\t{name}").unwrap();
    }
    out.push('\n');
    for (i, xv) in x.iter().enumerate() {
        write!(out, "{xv:?}").unwrap();
        for (_, values) in series {
            write!(out, "\t{:?}", values[i]).unwrap();
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Best-individual record: payload, fitness, provenance.
pub fn save_best_text(
    path: &Path,
    payloads: &[(String, f64, &str)],
    prov: &Provenance,
) -> Result<(), FormatError> {
    let mut out = prov.header("best-individuals");
    out.push_str("fitness\tsource\tpayload\n");
    for (payload, fitness, source) in payloads {
        writeln!(out, "{fitness:?}\t{source}\t{payload:?}").unwrap();
    }
    write_file(path, &out)
}

/// The default vocabulary, exported so external tooling can reuse it.
pub fn write_default_vocab(path: &Path) -> Result<(), FormatError> {
    save_vocab(path, &zoo::default_vocab())
}
