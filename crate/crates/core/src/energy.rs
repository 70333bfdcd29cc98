//! Deterministic coarse-grained accelerator energy simulator plus the
//! parametric physical power model.
//!
//! The simulator never touches real hardware: pipelines record per-layer
//! operation and DRAM-traffic counts into an [`ActivationTrace`], and
//! [`simulate_energy`] prices the trace under an [`AsicCostModel`]. Two
//! figures come out of every trace: the cost on an accelerator with sparsity
//! optimisations (zero-skipped multiplies, compressed activation traffic)
//! and the cost on one without, along with their ratio.
//!
//! Conventions, fixed so every count is hand-checkable:
//! * one trace entry per layer (or per decode step), flushed independently:
//!   each entry reads its inputs and weights from DRAM and writes its
//!   outputs back ("per-layer full flush", the only supported policy);
//! * a DRAM word is one 32-bit value; compressed activation tensors cost
//!   `min(total, 2 * nonzero)` words (value + index per nonzero, falling
//!   back to raw storage when that is larger); weights are never compressed;
//! * only floating-point multiplies are billed as arithmetic; adds,
//!   exponentials and divisions ride along for free;
//! * zero tests are exact (`== 0.0`) — post-ReLU zeros are exact zeros.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Per-operation energy prices and optimisation switches for the simulated
/// accelerator. Defaults follow published 45nm/0.9V measurements: 1950 pJ
/// per 32-bit DRAM access and 3.7 pJ per floating-point multiply.
#[derive(Debug, Clone, PartialEq)]
pub struct AsicCostModel {
    pub dram_access_energy_pj: f64,
    pub fp_mult_energy_pj: f64,
    pub zero_skip_enabled: bool,
    pub dram_compress_enabled: bool,
}

impl Default for AsicCostModel {
    fn default() -> Self {
        AsicCostModel {
            dram_access_energy_pj: 1950.0,
            fp_mult_energy_pj: 3.7,
            zero_skip_enabled: true,
            dram_compress_enabled: true,
        }
    }
}

impl AsicCostModel {
    /// Cost model with both sparsity optimisations switched off; useful when
    /// a fixed price per nominal operation is wanted.
    pub fn unoptimized() -> Self {
        AsicCostModel {
            zero_skip_enabled: false,
            dram_compress_enabled: false,
            ..AsicCostModel::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.dram_access_energy_pj > 0.0) || !(self.fp_mult_energy_pj > 0.0) {
            return Err(EnergyError::NonPositiveCost);
        }
        Ok(())
    }
}

/// One layer's (or one decode step's) worth of recorded work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerTraceEntry {
    pub layer_name: String,
    /// Nominal multiply count of the layer.
    pub mult_total: u64,
    /// Multiplies whose operands are both nonzero (what a zero-skipping
    /// accelerator executes).
    pub mult_nonzero: u64,
    /// Elements in the layer's recorded activation output.
    pub act_total: u64,
    pub act_nonzero: u64,
    pub dram_words_raw: u64,
    pub dram_words_compressed: u64,
}

impl LayerTraceEntry {
    fn check(&self) -> Result<(), EnergyError> {
        let fail = |reason: &'static str| {
            Err(EnergyError::InvalidLayer {
                layer: self.layer_name.clone(),
                reason,
            })
        };
        if self.mult_nonzero > self.mult_total {
            return fail("mult_nonzero exceeds mult_total");
        }
        if self.act_nonzero > self.act_total {
            return fail("act_nonzero exceeds act_total");
        }
        if self.dram_words_compressed > self.dram_words_raw {
            return fail("compressed DRAM words exceed raw");
        }
        Ok(())
    }
}

/// Ordered per-layer record of one inference.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivationTrace {
    pub layers: Vec<LayerTraceEntry>,
}

impl ActivationTrace {
    pub fn new() -> Self {
        ActivationTrace::default()
    }

    pub fn push(&mut self, entry: LayerTraceEntry) {
        self.layers.push(entry);
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        for layer in &self.layers {
            layer.check()?;
        }
        Ok(())
    }

    pub fn mult_total(&self) -> u64 {
        self.layers.iter().map(|l| l.mult_total).sum()
    }

    pub fn mult_nonzero(&self) -> u64 {
        self.layers.iter().map(|l| l.mult_nonzero).sum()
    }

    pub fn act_total(&self) -> u64 {
        self.layers.iter().map(|l| l.act_total).sum()
    }

    pub fn act_nonzero(&self) -> u64 {
        self.layers.iter().map(|l| l.act_nonzero).sum()
    }

    pub fn dram_words_raw(&self) -> u64 {
        self.layers.iter().map(|l| l.dram_words_raw).sum()
    }

    pub fn dram_words_compressed(&self) -> u64 {
        self.layers.iter().map(|l| l.dram_words_compressed).sum()
    }
}

/// Priced summary of a trace under a cost model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub energy_optimized_pj: f64,
    pub energy_unoptimized_pj: f64,
    /// `energy_optimized_pj / energy_unoptimized_pj`; in (0, 1].
    pub energy_ratio: f64,
    pub mult_total: u64,
    pub mult_nonzero: u64,
    pub act_total: u64,
    pub act_nonzero: u64,
    pub dram_words_raw: u64,
    pub dram_words_compressed: u64,
}

impl EnergyReport {
    pub fn energy_optimized_mj(&self) -> f64 {
        self.energy_optimized_pj * 1e-9
    }

    pub fn energy_unoptimized_mj(&self) -> f64 {
        self.energy_unoptimized_pj * 1e-9
    }
}

/// Price a trace. Layers are accumulated in order with plain f64 addition,
/// so equal traces yield bit-identical reports.
pub fn simulate_energy(
    trace: &ActivationTrace,
    cost: &AsicCostModel,
) -> Result<EnergyReport, EnergyError> {
    cost.validate()?;
    trace.validate()?;

    let mut optimized = 0.0f64;
    let mut unoptimized = 0.0f64;
    for layer in &trace.layers {
        let mult_effective = if cost.zero_skip_enabled {
            layer.mult_nonzero
        } else {
            layer.mult_total
        };
        let dram_effective = if cost.dram_compress_enabled {
            layer.dram_words_compressed
        } else {
            layer.dram_words_raw
        };
        optimized += mult_effective as f64 * cost.fp_mult_energy_pj
            + dram_effective as f64 * cost.dram_access_energy_pj;
        unoptimized += layer.mult_total as f64 * cost.fp_mult_energy_pj
            + layer.dram_words_raw as f64 * cost.dram_access_energy_pj;
    }

    // Empty traces price to zero on both sides; report ratio 1.
    let ratio = if unoptimized > 0.0 {
        optimized / unoptimized
    } else {
        1.0
    };

    Ok(EnergyReport {
        energy_optimized_pj: optimized,
        energy_unoptimized_pj: unoptimized,
        energy_ratio: ratio,
        mult_total: trace.mult_total(),
        mult_nonzero: trace.mult_nonzero(),
        act_total: trace.act_total(),
        act_nonzero: trace.act_nonzero(),
        dram_words_raw: trace.dram_words_raw(),
        dram_words_compressed: trace.dram_words_compressed(),
    })
}

/// The single supported memory flushing strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlushPolicy {
    /// Every layer reads all inputs and weights from DRAM and writes all
    /// outputs back; no inter-layer caching.
    #[default]
    PerLayerFull,
}

/// Word and nonzero counts of one activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorWords {
    pub total: u64,
    pub nonzero: u64,
}

impl TensorWords {
    pub fn dense(total: u64) -> Self {
        TensorWords {
            total,
            nonzero: total,
        }
    }

    /// Words after sparse encoding: value + index per nonzero, never more
    /// than raw storage.
    pub fn compressed(&self) -> u64 {
        self.total.min(2 * self.nonzero)
    }
}

/// Raw and compressed DRAM words of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DramWords {
    pub raw: u64,
    pub compressed: u64,
}

/// Per-layer DRAM traffic under the flush policy: raw traffic moves input,
/// weight and output words untouched; compressed traffic sparse-encodes the
/// activation tensors and leaves weights alone.
pub fn dram_traffic(
    input: TensorWords,
    weight_words: u64,
    output: TensorWords,
    _policy: FlushPolicy,
) -> DramWords {
    DramWords {
        raw: input.total + weight_words + output.total,
        compressed: input.compressed() + weight_words + output.compressed(),
    }
}

/// Every symbol of the static + dynamic power formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalEnergyParams {
    /// Reverse saturation current (A).
    pub i_s: f64,
    /// Diode voltage (V).
    pub v_d: f64,
    /// Electronic charge (C).
    pub q: f64,
    /// Boltzmann constant (J/K).
    pub k: f64,
    pub temperature_k: f64,
    pub v_core: f64,
    /// Activity factor in [0, 1].
    pub alpha: f64,
    pub capacitance_f: f64,
    pub frequency_hz: f64,
    pub duration_s: f64,
}

impl Default for PhysicalEnergyParams {
    fn default() -> Self {
        PhysicalEnergyParams {
            i_s: 1e-12,
            v_d: 0.7,
            q: 1.602_176_634e-19,
            k: 1.380_649e-23,
            temperature_k: 300.0,
            v_core: 0.9,
            alpha: 0.5,
            capacitance_f: 1e-9,
            frequency_hz: 1e9,
            duration_s: 1.0,
        }
    }
}

impl PhysicalEnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let positives = [
            ("v_d", self.v_d),
            ("q", self.q),
            ("k", self.k),
            ("temperature_k", self.temperature_k),
            ("v_core", self.v_core),
            ("capacitance_f", self.capacitance_f),
            ("frequency_hz", self.frequency_hz),
            ("duration_s", self.duration_s),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(EnergyError::InvalidParam { name });
            }
        }
        if !(self.i_s >= 0.0) || !self.i_s.is_finite() {
            return Err(EnergyError::InvalidParam { name: "i_s" });
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(EnergyError::InvalidParam { name: "alpha" });
        }
        Ok(())
    }
}

/// Energy drawn over `duration_s`:
/// `E = (I_s * (e^(q*V_d/(k*T)) - 1) * V_core + alpha * C * V_core^2 * f) * t`.
pub fn physical_energy(p: &PhysicalEnergyParams) -> Result<f64, EnergyError> {
    p.validate()?;
    let exponent = p.q * p.v_d / (p.k * p.temperature_k);
    let grown = math::exp(exponent);
    if !grown.is_finite() {
        return Err(EnergyError::ExponentOverflow { exponent });
    }
    let p_static = p.i_s * (grown - 1.0) * p.v_core;
    let p_dynamic = p.alpha * p.capacitance_f * p.v_core * p.v_core * p.frequency_hz;
    let energy = (p_static + p_dynamic) * p.duration_s;
    if !energy.is_finite() {
        return Err(EnergyError::ExponentOverflow { exponent });
    }
    Ok(energy)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergyError {
    InvalidLayer {
        layer: String,
        reason: &'static str,
    },
    NonPositiveCost,
    InvalidParam {
        name: &'static str,
    },
    ExponentOverflow {
        exponent: f64,
    },
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyError::InvalidLayer { layer, reason } => {
                write!(f, "invalid trace layer '{layer}': {reason}")
            }
            EnergyError::NonPositiveCost => write!(f, "cost model energies must be positive"),
            EnergyError::InvalidParam { name } => {
                write!(f, "physical energy parameter '{name}' out of range")
            }
            EnergyError::ExponentOverflow { exponent } => {
                write!(f, "static power exponential overflowed (exponent {exponent})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EnergyError {}
