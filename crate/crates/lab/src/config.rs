//! Config-file driven experiments: one TOML file, one task, one output
//! directory. `--override key=value` patches dotted paths before parsing,
//! and the resolved config is hashed so every output can state exactly
//! which configuration produced it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sponge_core::attacks::GaConfig;
use sponge_core::energy::AsicCostModel;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cost_model: CostModelConfig,
    #[serde(default)]
    pub translator: TranslatorConfig,
    /// Second translator for transfer experiments.
    #[serde(default)]
    pub translator_b: TranslatorConfig,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub ga: GaSection,
    #[serde(default)]
    pub nlp: NlpSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub service: ServiceSection,
    #[serde(default)]
    pub defense: DefenseSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub measure: MeasureSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    AttackNlp,
    AttackCv,
    AttackBlackbox,
    Simulate,
    Transfer,
    ProfileDefense,
    Stats,
    Serve,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::AttackNlp => "attack-nlp",
            Task::AttackCv => "attack-cv",
            Task::AttackBlackbox => "attack-blackbox",
            Task::Simulate => "simulate",
            Task::Transfer => "transfer",
            Task::ProfileDefense => "profile-defense",
            Task::Stats => "stats",
            Task::Serve => "serve",
        }
    }
}

fn d_dram_pj() -> f64 { AsicCostModel::default().dram_access_energy_pj }
fn d_mult_pj() -> f64 { AsicCostModel::default().fp_mult_energy_pj }
fn d_true() -> bool { true }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CostModelConfig {
    #[serde(default = "d_dram_pj")]
    pub dram_access_energy_pj: f64,
    #[serde(default = "d_mult_pj")]
    pub fp_mult_energy_pj: f64,
    #[serde(default = "d_true")]
    pub zero_skip: bool,
    #[serde(default = "d_true")]
    pub dram_compress: bool,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        let m = AsicCostModel::default();
        CostModelConfig {
            dram_access_energy_pj: m.dram_access_energy_pj,
            fp_mult_energy_pj: m.fp_mult_energy_pj,
            zero_skip: m.zero_skip_enabled,
            dram_compress: m.dram_compress_enabled,
        }
    }
}

impl CostModelConfig {
    pub fn build(&self) -> AsicCostModel {
        AsicCostModel {
            dram_access_energy_pj: self.dram_access_energy_pj,
            fp_mult_energy_pj: self.fp_mult_energy_pj,
            zero_skip_enabled: self.zero_skip,
            dram_compress_enabled: self.dram_compress,
        }
    }
}

/// A translator comes from a generation seed or a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct TranslatorConfig {
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct VocabConfig {
    /// Vocabulary file; the documented built-in vocabulary when absent.
    pub path: Option<PathBuf>,
}

fn d_pool_size() -> usize { GaConfig::default().pool_size }
fn d_generations() -> usize { GaConfig::default().generations }
fn d_selection_fraction() -> f64 { GaConfig::default().selection_fraction }
fn d_mutation_rate() -> f64 { GaConfig::default().mutation_rate }
fn d_flip_probability() -> f64 { GaConfig::default().flip_probability }
fn d_dilution_fraction() -> f64 { GaConfig::default().dilution_fraction }
fn d_min_classes() -> usize { GaConfig::default().min_classes_preserved }
fn d_fitness() -> String { "simulated-energy".to_string() }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaSection {
    #[serde(default = "d_pool_size")]
    pub pool_size: usize,
    #[serde(default = "d_generations")]
    pub generations: usize,
    #[serde(default = "d_selection_fraction")]
    pub selection_fraction: f64,
    #[serde(default = "d_mutation_rate")]
    pub mutation_rate: f64,
    #[serde(default = "d_flip_probability")]
    pub flip_probability: f64,
    #[serde(default = "d_dilution_fraction")]
    pub dilution_fraction: f64,
    #[serde(default = "d_min_classes")]
    pub min_classes_preserved: usize,
    /// "simulated-energy" or "estimated-ops" for white-box text attacks.
    #[serde(default = "d_fitness")]
    pub fitness: String,
}

impl Default for GaSection {
    fn default() -> Self {
        let g = GaConfig::default();
        GaSection {
            pool_size: g.pool_size,
            generations: g.generations,
            selection_fraction: g.selection_fraction,
            mutation_rate: g.mutation_rate,
            flip_probability: g.flip_probability,
            dilution_fraction: g.dilution_fraction,
            min_classes_preserved: g.min_classes_preserved,
            fitness: "simulated-energy".to_string(),
        }
    }
}

impl GaSection {
    pub fn build(&self, seed: u64) -> GaConfig {
        GaConfig {
            pool_size: self.pool_size,
            generations: self.generations,
            selection_fraction: self.selection_fraction,
            mutation_rate: self.mutation_rate,
            flip_probability: self.flip_probability,
            dilution_fraction: self.dilution_fraction,
            min_classes_preserved: self.min_classes_preserved,
            seed,
        }
    }
}

fn d_input_chars() -> usize { 16 }
fn d_natural_corpus() -> usize { 100 }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NlpSection {
    /// Payload length in characters.
    #[serde(default = "d_input_chars")]
    pub input_chars: usize,
    /// Natural-like baseline corpus size.
    #[serde(default = "d_natural_corpus")]
    pub natural_corpus: usize,
}

impl Default for NlpSection {
    fn default() -> Self {
        NlpSection {
            input_chars: 16,
            natural_corpus: 100,
        }
    }
}

fn d_eight() -> usize { 8 }
fn d_model_reference() -> String { "reference".to_string() }
fn d_lbfgs_steps() -> usize { 200 }
fn d_lbfgs_memory() -> usize { 10 }
fn d_baseline_samples() -> usize { 200 }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "d_eight")]
    pub height: usize,
    #[serde(default = "d_eight")]
    pub width: usize,
    /// "reference" or a checkpoint path.
    #[serde(default = "d_model_reference")]
    pub model: String,
    #[serde(default = "d_true")]
    pub run_lbfgs: bool,
    #[serde(default = "d_lbfgs_steps")]
    pub lbfgs_steps: usize,
    #[serde(default = "d_lbfgs_memory")]
    pub lbfgs_memory: usize,
    /// Baseline sample count per class (natural / random).
    #[serde(default = "d_baseline_samples")]
    pub baseline_samples: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            height: 8,
            width: 8,
            model: "reference".to_string(),
            run_lbfgs: true,
            lbfgs_steps: 200,
            lbfgs_memory: 10,
            baseline_samples: 200,
        }
    }
}

fn d_cache_capacity() -> usize { crate::service::ServiceConfig::default().cache_capacity }
fn d_base_net() -> f64 { crate::service::ServiceConfig::default().base_network_latency_s }
fn d_jitter() -> f64 { crate::service::ServiceConfig::default().network_jitter_s }
fn d_service_base() -> f64 { crate::service::ServiceConfig::default().service_base_latency_s }
fn d_per_step() -> f64 { crate::service::ServiceConfig::default().per_decode_step_latency_s }
fn d_cache_hit() -> f64 { crate::service::ServiceConfig::default().cache_hit_latency_s }
fn d_max_chars() -> usize { crate::service::ServiceConfig::default().max_input_chars }
fn d_repeats() -> usize { 3 }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    /// Port to serve on (0 = ephemeral). For attack-blackbox, an endpoint
    /// to attack instead of self-hosting may be given.
    #[serde(default)]
    pub port: u16,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub allow_remote: bool,
    #[serde(default = "d_cache_capacity")]
    pub cache_capacity: usize,
    #[serde(default = "d_base_net")]
    pub base_network_latency_s: f64,
    #[serde(default = "d_jitter")]
    pub network_jitter_s: f64,
    #[serde(default = "d_service_base")]
    pub service_base_latency_s: f64,
    #[serde(default = "d_per_step")]
    pub per_decode_step_latency_s: f64,
    #[serde(default = "d_cache_hit")]
    pub cache_hit_latency_s: f64,
    #[serde(default = "d_max_chars")]
    pub max_input_chars: usize,
    #[serde(default)]
    pub real_sleep: bool,
    /// Round trips per fitness evaluation (median taken).
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    /// Wrap the served pipeline with this consumption profile.
    #[serde(default)]
    pub guard_profile: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        let s = crate::service::ServiceConfig::default();
        ServiceSection {
            port: 0,
            endpoint: None,
            allow_remote: false,
            cache_capacity: s.cache_capacity,
            base_network_latency_s: s.base_network_latency_s,
            network_jitter_s: s.network_jitter_s,
            service_base_latency_s: s.service_base_latency_s,
            per_decode_step_latency_s: s.per_decode_step_latency_s,
            cache_hit_latency_s: s.cache_hit_latency_s,
            max_input_chars: s.max_input_chars,
            real_sleep: s.real_sleep,
            repeats: 3,
            guard_profile: None,
        }
    }
}

impl ServiceSection {
    pub fn build(&self) -> crate::service::ServiceConfig {
        crate::service::ServiceConfig {
            cache_capacity: self.cache_capacity,
            base_network_latency_s: self.base_network_latency_s,
            network_jitter_s: self.network_jitter_s,
            service_base_latency_s: self.service_base_latency_s,
            per_decode_step_latency_s: self.per_decode_step_latency_s,
            cache_hit_latency_s: self.cache_hit_latency_s,
            max_input_chars: self.max_input_chars,
            real_sleep: self.real_sleep,
        }
    }
}

fn d_percentile() -> f64 { 99.0 }
fn d_corpus_size() -> usize { 200 }
fn d_holdout_size() -> usize { 100 }
fn d_cost_source() -> String { "simulated-energy".to_string() }
fn d_latency_base() -> f64 { 1e-3 }
fn d_latency_per_pj() -> f64 { 1e-12 }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DefenseSection {
    #[serde(default = "d_percentile")]
    pub percentile: f64,
    #[serde(default = "d_corpus_size")]
    pub corpus_size: usize,
    #[serde(default = "d_holdout_size")]
    pub holdout_size: usize,
    /// "simulated-energy" or "simulated-latency".
    #[serde(default = "d_cost_source")]
    pub cost_source: String,
    #[serde(default = "d_latency_base")]
    pub latency_base_s: f64,
    #[serde(default = "d_latency_per_pj")]
    pub latency_seconds_per_pj: f64,
}

impl Default for DefenseSection {
    fn default() -> Self {
        DefenseSection {
            percentile: 99.0,
            corpus_size: 200,
            holdout_size: 100,
            cost_source: "simulated-energy".to_string(),
            latency_base_s: 1e-3,
            latency_seconds_per_pj: 1e-12,
        }
    }
}

fn d_samples_per_class() -> usize { 300 }
fn d_alpha() -> f64 { 0.01 }
fn d_lengths() -> Vec<usize> { vec![8, 16] }
fn d_ordering() -> String { "sponge-random-natural".to_string() }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StatsSection {
    #[serde(default = "d_samples_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_lengths")]
    pub lengths: Vec<usize>,
    /// "sponge-random-natural" (text) or "sponge-natural-random" (vision).
    #[serde(default = "d_ordering")]
    pub ordering: String,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection {
            samples_per_class: 300,
            alpha: 0.01,
            lengths: vec![8, 16],
            ordering: "sponge-random-natural".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub trace_path: Option<PathBuf>,
}

fn d_warmup_count() -> usize { 100 }

/// Measurement harness knobs. `meter_path` names an OS counter file holding
/// a cumulative microjoule reading; when absent or unreadable, tasks that
/// would report energy degrade to latency-only mode.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    #[serde(default)]
    pub meter_path: Option<PathBuf>,
    #[serde(default = "d_warmup_count")]
    pub warmup_count: usize,
}

impl Default for MeasureSection {
    fn default() -> Self {
        MeasureSection {
            meter_path: None,
            warmup_count: d_warmup_count(),
        }
    }
}

fn d_sponges() -> usize { 100 }

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    #[serde(default = "d_sponges")]
    pub sponges: usize,
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection { sponges: 100 }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("override '{0}' is not of the form key=value")]
    MalformedOverride(String),
    #[error("override path '{0}' does not exist in the config")]
    UnknownOverridePath(String),
    #[error("config field {path}: {message}")]
    Validate { path: String, message: String },
}

/// Parse a config file, apply `--override key=value` patches (dotted key
/// paths into the TOML tree), then optional seed/out overrides.
pub fn load_config(
    path: &Path,
    overrides: &[String],
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        source: e,
    })?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut value = toml::Value::Table(table);

    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::MalformedOverride(item.clone()))?;
        apply_override(&mut value, key.trim(), raw.trim())?;
    }

    let mut config: ExperimentConfig = value
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    if let Some(out) = out_override {
        config.out_dir = out.to_path_buf();
    }
    validate(&config)?;
    Ok(config)
}

fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*part))
            .ok_or_else(|| ConfigError::UnknownOverridePath(key.to_string()))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| ConfigError::UnknownOverridePath(key.to_string()))?;
    let leaf = *parts.last().unwrap();
    // Parse the value as TOML when possible, else keep it as a string.
    let parsed: toml::Value = raw
        .parse::<toml::Value>()
        .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
    table.insert(leaf.to_string(), parsed);
    Ok(())
}

fn validate(config: &ExperimentConfig) -> Result<(), ConfigError> {
    let field = |path: &str, message: String| ConfigError::Validate {
        path: path.to_string(),
        message,
    };
    if config.ga.pool_size < 10 {
        return Err(field("ga.pool_size", "must be at least 10".into()));
    }
    for (path, v) in [
        ("ga.selection_fraction", config.ga.selection_fraction),
        ("ga.dilution_fraction", config.ga.dilution_fraction),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(field(path, format!("{v} outside (0, 1]")));
        }
    }
    for (path, v) in [
        ("ga.mutation_rate", config.ga.mutation_rate),
        ("ga.flip_probability", config.ga.flip_probability),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(field(path, format!("{v} outside [0, 1]")));
        }
    }
    if !(config.defense.percentile > 0.0 && config.defense.percentile <= 100.0) {
        return Err(field(
            "defense.percentile",
            format!("{} outside (0, 100]", config.defense.percentile),
        ));
    }
    match config.ga.fitness.as_str() {
        "simulated-energy" | "estimated-ops" => {}
        other => {
            return Err(field(
                "ga.fitness",
                format!("unknown fitness '{other}' (simulated-energy | estimated-ops)"),
            ))
        }
    }
    match config.stats.ordering.as_str() {
        "sponge-random-natural" | "sponge-natural-random" => {}
        other => {
            return Err(field(
                "stats.ordering",
                format!("unknown ordering '{other}'"),
            ))
        }
    }
    match config.defense.cost_source.as_str() {
        "simulated-energy" | "simulated-latency" => {}
        other => {
            return Err(field(
                "defense.cost_source",
                format!("unknown cost source '{other}'"),
            ))
        }
    }
    // Referenced files must exist up front.
    let mut referenced: Vec<(&str, &Option<PathBuf>)> = vec![
        ("translator.path", &config.translator.path),
        ("translator_b.path", &config.translator_b.path),
        ("vocab.path", &config.vocab.path),
        ("service.guard_profile", &config.service.guard_profile),
    ];
    if config.task == Task::Simulate {
        referenced.push(("simulate.trace_path", &config.simulate.trace_path));
        if config.simulate.trace_path.is_none() {
            return Err(field("simulate.trace_path", "required for task simulate".into()));
        }
    }
    for (path, value) in referenced {
        if let Some(p) = value {
            if !p.exists() {
                return Err(field(path, format!("file {} does not exist", p.display())));
            }
        }
    }
    Ok(())
}

/// Short hex digest of the resolved config, stamped into every output. The
/// output directory is excluded: where results land does not change what
/// experiment ran.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical_config = config.clone();
    canonical_config.out_dir = PathBuf::new();
    let canonical = toml::to_string(&canonical_config).unwrap_or_default();
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(12);
    for byte in digest.iter().take(6) {
        write!(out, "{byte:02x}").unwrap();
    }
    out
}
