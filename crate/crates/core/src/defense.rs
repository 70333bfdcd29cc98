//! Cutoff-threshold defense: profile the cost of natural inputs, fix a
//! percentile threshold, and abort any inference whose accumulated cost
//! crosses it.
//!
//! The abort is mid-inference (per decode step for the translator, per
//! layer for the CNN), so the energy actually spent on a rejected input is
//! bounded by the threshold plus one step's cost, not just detected after
//! the fact.

use alloc::vec::Vec;
use core::fmt;

use crate::energy::EnergyError;
use crate::nlp::{BudgetOutcome, NlpError, TextPipeline, TokenSequence, Translation};
use crate::stats::StatsError;

/// What a profiled cost number means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostSource {
    /// Optimized simulated energy, picojoules.
    SimulatedEnergy,
    /// Deterministic simulated latency in seconds, affine in energy.
    SimulatedLatency { base_s: f64, seconds_per_pj: f64 },
}

impl CostSource {
    pub fn cost_of_energy(&self, energy_pj: f64) -> f64 {
        match self {
            CostSource::SimulatedEnergy => energy_pj,
            CostSource::SimulatedLatency {
                base_s,
                seconds_per_pj,
            } => base_s + seconds_per_pj * energy_pj,
        }
    }

    /// Invert a threshold in profile units back to an energy budget.
    fn energy_budget(&self, threshold: f64) -> f64 {
        match self {
            CostSource::SimulatedEnergy => threshold,
            CostSource::SimulatedLatency {
                base_s,
                seconds_per_pj,
            } => (threshold - base_s) / seconds_per_pj,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CostSource::SimulatedEnergy => "simulated-energy",
            CostSource::SimulatedLatency { .. } => "simulated-latency",
        }
    }
}

/// Per-example costs of a natural corpus plus the chosen cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionProfile {
    pub costs: Vec<f64>,
    /// Percentile in (0, 100].
    pub percentile: f64,
    /// Exact empirical percentile of `costs` (nearest-rank).
    pub threshold: f64,
    pub source: CostSource,
}

/// Nearest-rank percentile by quickselect; the sorted-oracle in the tests
/// recomputes it independently.
pub fn nearest_rank_percentile(costs: &[f64], percentile: f64) -> f64 {
    debug_assert!(!costs.is_empty());
    let n = costs.len();
    let rank = crate::math::ceil(percentile / 100.0 * n as f64) as usize;
    let idx = rank.clamp(1, n) - 1;
    let mut scratch: Vec<f64> = costs.to_vec();
    let (_, value, _) = scratch.select_nth_unstable_by(idx, |a, b| {
        a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal)
    });
    *value
}

/// Profile a natural corpus through the pipeline under the chosen cost
/// source and fix the cutoff at the given percentile.
pub fn profile_natural(
    pipeline: &TextPipeline,
    corpus: &[&str],
    percentile: f64,
    source: CostSource,
) -> Result<ConsumptionProfile, DefenseError> {
    if corpus.is_empty() {
        return Err(DefenseError::EmptyCorpus);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(DefenseError::InvalidPercentile(percentile));
    }
    let mut costs = Vec::with_capacity(corpus.len());
    for text in corpus {
        let run = pipeline.evaluate(text)?;
        costs.push(source.cost_of_energy(run.energy_pj()));
    }
    let threshold = nearest_rank_percentile(&costs, percentile);
    Ok(ConsumptionProfile {
        costs,
        percentile,
        threshold,
        source,
    })
}

/// Outcome of a guarded inference; rejection is a result, not an error.
#[derive(Debug, Clone)]
pub enum GuardedInference {
    Completed {
        input: TokenSequence,
        translation: Translation,
        /// Cost in the profile's units.
        cost: f64,
    },
    Rejected {
        /// Cost actually expended before the abort, in profile units.
        partial_cost: f64,
        steps_completed: usize,
    },
}

/// Run the pipeline under the profile's threshold, aborting per decode step
/// once the accumulated cost crosses it.
pub fn guarded_infer(
    pipeline: &TextPipeline,
    text: &str,
    profile: &ConsumptionProfile,
) -> Result<GuardedInference, DefenseError> {
    let budget_pj = profile.source.energy_budget(profile.threshold);
    let run = pipeline.evaluate_with_budget(text, budget_pj)?;
    Ok(match run.outcome {
        BudgetOutcome::Completed {
            translation,
            cost_pj,
        } => GuardedInference::Completed {
            input: run.input,
            translation,
            cost: profile.source.cost_of_energy(cost_pj),
        },
        BudgetOutcome::Rejected {
            partial_cost_pj,
            steps_completed,
            ..
        } => GuardedInference::Rejected {
            partial_cost: profile.source.cost_of_energy(partial_cost_pj),
            steps_completed,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DefenseError {
    EmptyCorpus,
    InvalidPercentile(f64),
    Nlp(NlpError),
    Energy(EnergyError),
    Stats(StatsError),
}

impl fmt::Display for DefenseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefenseError::EmptyCorpus => write!(f, "natural corpus is empty"),
            DefenseError::InvalidPercentile(p) => {
                write!(f, "percentile {p} outside (0, 100]")
            }
            DefenseError::Nlp(e) => write!(f, "{e}"),
            DefenseError::Energy(e) => write!(f, "{e}"),
            DefenseError::Stats(e) => write!(f, "{e}"),
        }
    }
}

impl From<NlpError> for DefenseError {
    fn from(e: NlpError) -> Self {
        DefenseError::Nlp(e)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DefenseError {}
