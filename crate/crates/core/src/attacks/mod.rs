//! Sponge-example search: a genetic algorithm with NLP and CV domain
//! operators, a white-box L-BFGS attack, and an exhaustive worst-case
//! oracle for tiny search spaces.

mod exhaustive;
mod lbfgs;

pub use exhaustive::exhaustive_worst_case;
pub use lbfgs::{lbfgs_attack, LbfgsConfig, LbfgsResult};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::nlp::Alphabet;
use crate::vision::Image;
use crate::SpongeRng;

/// Where a fitness number came from. Values are only comparable within one
/// source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessSource {
    SimulatedEnergy,
    MeasuredLatency,
    MeasuredEnergy,
    EstimatedOps,
}

impl FitnessSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitnessSource::SimulatedEnergy => "simulated-energy",
            FitnessSource::MeasuredLatency => "measured-latency",
            FitnessSource::MeasuredEnergy => "measured-energy",
            FitnessSource::EstimatedOps => "estimated-ops",
        }
    }
}

/// Scalar objective of the search; finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessValue {
    pub value: f64,
    pub source: FitnessSource,
}

impl FitnessValue {
    pub fn new(value: f64, source: FitnessSource) -> Result<Self, AttackError> {
        if !value.is_finite() || value < 0.0 {
            return Err(AttackError::InvalidFitness { value });
        }
        Ok(FitnessValue { value, source })
    }
}

/// A candidate input with cached fitness and (for CV) predicted class.
#[derive(Debug, Clone)]
pub struct Individual<P> {
    pub payload: P,
    pub fitness: Option<FitnessValue>,
    pub class: Option<usize>,
}

impl<P> Individual<P> {
    pub fn new(payload: P) -> Self {
        Individual {
            payload,
            fitness: None,
            class: None,
        }
    }

    fn fitness_value(&self) -> f64 {
        self.fitness.map(|f| f.value).unwrap_or(0.0)
    }
}

/// Genetic search parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub pool_size: usize,
    pub generations: usize,
    /// Fraction of the pool selected as parents each generation.
    pub selection_fraction: f64,
    /// Per-character mutation probability (NLP).
    pub mutation_rate: f64,
    /// Probability of swapping which parent contributes the left half (NLP).
    pub flip_probability: f64,
    /// Fraction of pixels resampled per mutation (CV).
    pub dilution_fraction: f64,
    /// Number of predicted classes whose best member survives selection (CV).
    pub min_classes_preserved: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pool_size: 1000,
            generations: 1000,
            selection_fraction: 0.10,
            mutation_rate: 0.05,
            flip_probability: 0.5,
            dilution_fraction: 0.01,
            min_classes_preserved: 20,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.pool_size < 10 {
            return Err(AttackError::InvalidConfig("pool_size must be at least 10"));
        }
        let fractions = [
            ("selection_fraction", self.selection_fraction),
            ("dilution_fraction", self.dilution_fraction),
        ];
        for (name, f) in fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(AttackError::InvalidConfigField { name });
            }
        }
        for (name, f) in [
            ("mutation_rate", self.mutation_rate),
            ("flip_probability", self.flip_probability),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(AttackError::InvalidConfigField { name });
            }
        }
        Ok(())
    }
}

/// Payload-specific GA operators. Implementations must preserve the payload
/// dimension across sampling, crossover and mutation.
pub trait Domain {
    type Payload: Clone;

    fn sample(&self, config: &GaConfig, rng: &mut SpongeRng) -> Self::Payload;
    fn crossover(
        &self,
        config: &GaConfig,
        a: &Self::Payload,
        b: &Self::Payload,
        rng: &mut SpongeRng,
    ) -> Result<Self::Payload, AttackError>;
    fn mutate(
        &self,
        config: &GaConfig,
        payload: &Self::Payload,
        rng: &mut SpongeRng,
    ) -> Self::Payload;
    fn dimension(&self, payload: &Self::Payload) -> usize;
    /// Whether selection should additionally preserve per-class champions.
    fn preserves_classes(&self) -> bool {
        false
    }
}

/// Fixed-length text payloads over an alphabet.
#[derive(Debug, Clone)]
pub struct NlpDomain {
    pub alphabet: Vec<char>,
    pub length: usize,
}

impl NlpDomain {
    /// Sampling alphabet: the pipeline alphabet plus the space character.
    pub fn from_alphabet(alphabet: &Alphabet, length: usize) -> Self {
        let mut chars = alphabet.chars.clone();
        if !chars.contains(&' ') {
            chars.push(' ');
        }
        NlpDomain {
            alphabet: chars,
            length,
        }
    }
}

impl Domain for NlpDomain {
    type Payload = String;

    fn sample(&self, _config: &GaConfig, rng: &mut SpongeRng) -> String {
        random_text(&self.alphabet, self.length, rng)
    }

    fn crossover(
        &self,
        config: &GaConfig,
        a: &String,
        b: &String,
        rng: &mut SpongeRng,
    ) -> Result<String, AttackError> {
        crossover_nlp(a, b, config.flip_probability, rng)
    }

    fn mutate(&self, config: &GaConfig, payload: &String, rng: &mut SpongeRng) -> String {
        mutate_nlp(payload, rng, config.mutation_rate, &self.alphabet)
    }

    fn dimension(&self, payload: &String) -> usize {
        payload.chars().count()
    }
}

/// Fixed-shape image payloads.
#[derive(Debug, Clone)]
pub struct CvDomain {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Domain for CvDomain {
    type Payload = Image;

    fn sample(&self, _config: &GaConfig, rng: &mut SpongeRng) -> Image {
        crate::corpus::random_image(rng, self.channels, self.height, self.width)
    }

    fn crossover(
        &self,
        _config: &GaConfig,
        a: &Image,
        b: &Image,
        rng: &mut SpongeRng,
    ) -> Result<Image, AttackError> {
        crossover_cv(a, b, rng)
    }

    fn mutate(&self, config: &GaConfig, payload: &Image, rng: &mut SpongeRng) -> Image {
        mutate_cv(payload, rng, config.dilution_fraction)
    }

    fn dimension(&self, payload: &Image) -> usize {
        payload.len()
    }

    fn preserves_classes(&self) -> bool {
        true
    }
}

pub fn random_text(alphabet: &[char], length: usize, rng: &mut SpongeRng) -> String {
    (0..length)
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
        .collect()
}

/// Child = left half of `a` + right half of `b`; with probability
/// `flip_probability` the parent roles swap. Odd lengths split after
/// `len / 2` characters (shorter left half).
pub fn crossover_nlp(
    a: &str,
    b: &str,
    flip_probability: f64,
    rng: &mut SpongeRng,
) -> Result<String, AttackError> {
    let a_chars: Vec<char> = a.chars().collect();
    let b_chars: Vec<char> = b.chars().collect();
    if a_chars.len() != b_chars.len() {
        return Err(AttackError::PayloadLengthMismatch {
            a: a_chars.len(),
            b: b_chars.len(),
        });
    }
    let split = a_chars.len() / 2;
    let flipped = rng.gen_bool(flip_probability);
    let (left, right) = if flipped {
        (&b_chars, &a_chars)
    } else {
        (&a_chars, &b_chars)
    };
    Ok(left[..split].iter().chain(right[split..].iter()).collect())
}

/// Per-pixel binary mask blend: each child pixel comes from exactly one
/// parent, chosen by a fair coin.
pub fn crossover_cv(a: &Image, b: &Image, rng: &mut SpongeRng) -> Result<Image, AttackError> {
    if a.shape() != b.shape() {
        return Err(AttackError::PayloadShapeMismatch);
    }
    let mut child = a.clone();
    for (c, bv) in child.data.iter_mut().zip(b.data.iter()) {
        if !rng.gen_bool(0.5) {
            *c = *bv;
        }
    }
    Ok(child)
}

/// Each character independently resampled uniformly over the alphabet with
/// probability `rate`; length always preserved.
pub fn mutate_nlp(s: &str, rng: &mut SpongeRng, rate: f64, alphabet: &[char]) -> String {
    s.chars()
        .map(|c| {
            if rng.gen_bool(rate) {
                alphabet[rng.gen_range(0..alphabet.len())]
            } else {
                c
            }
        })
        .collect()
}

/// Dilute exactly `ceil(fraction * pixels)` distinct pixels with fresh
/// uniform [0, 1) values; everything else is untouched.
pub fn mutate_cv(image: &Image, rng: &mut SpongeRng, fraction: f64) -> Image {
    let n = image.len();
    let k = (crate::math::ceil(fraction * n as f64) as usize).clamp(1, n);
    let mut out = image.clone();
    let picks = rand::seq::index::sample(rng, n, k);
    for idx in picks.iter() {
        out.data[idx] = rng.gen_range(0.0..1.0);
    }
    out
}

/// Top `ceil(fraction * pool)` individuals by fitness, ties broken by pool
/// order. When `preserve_classes` is set, the best individual of each of the
/// strongest `min_classes_preserved` predicted classes is retained as well.
pub fn select_top<P: Clone>(
    pool: &[Individual<P>],
    config: &GaConfig,
    preserve_classes: bool,
) -> Vec<Individual<P>> {
    let keep =
        (crate::math::ceil(config.selection_fraction * pool.len() as f64) as usize).clamp(1, pool.len());
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Stable sort: equal fitness keeps insertion order.
    order.sort_by(|&i, &j| {
        pool[j]
            .fitness_value()
            .partial_cmp(&pool[i].fitness_value())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut chosen: Vec<usize> = order[..keep].to_vec();

    if preserve_classes && config.min_classes_preserved > 0 {
        // Champion of each predicted class, classes ranked by champion
        // fitness.
        let mut champions: Vec<(usize, usize)> = Vec::new(); // (class, index)
        for &idx in &order {
            if let Some(class) = pool[idx].class {
                if !champions.iter().any(|(c, _)| *c == class) {
                    champions.push((class, idx));
                }
            }
        }
        for (_, idx) in champions.into_iter().take(config.min_classes_preserved) {
            if !chosen.contains(&idx) {
                chosen.push(idx);
            }
        }
    }

    chosen.into_iter().map(|i| pool[i].clone()).collect()
}

/// Fitness report for one candidate.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub fitness: FitnessValue,
    pub class: Option<usize>,
}

/// Per-generation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub source: FitnessSource,
    /// Evaluations that failed this generation (each scored as worst).
    pub failures: usize,
}

/// Outcome of a GA run: final pool sorted best-first plus the per-generation
/// history.
#[derive(Debug, Clone)]
pub struct GaOutcome<P> {
    pub best: Individual<P>,
    pub pool: Vec<Individual<P>>,
    pub history: Vec<GenerationStats>,
}

/// Evolve a pool for `config.generations` generations.
///
/// Loop: evaluate fitness -> record stats -> select parents -> breed by
/// crossover + mutation. The single best individual is copied unmutated
/// into the next generation (elitism), so best-so-far fitness never
/// decreases. Failed evaluations score as worst fitness and are counted,
/// never fatal.
pub fn ga_run<D, F, E>(
    config: &GaConfig,
    domain: &D,
    source: FitnessSource,
    mut evaluate: F,
) -> Result<GaOutcome<D::Payload>, AttackError>
where
    D: Domain,
    F: FnMut(&D::Payload) -> Result<Evaluation, E>,
{
    config.validate()?;
    let mut rng = crate::rng_from_seed(config.seed);

    let mut pool: Vec<Individual<D::Payload>> = (0..config.pool_size)
        .map(|_| Individual::new(domain.sample(config, &mut rng)))
        .collect();
    let dim = domain.dimension(&pool[0].payload);

    let mut history = Vec::with_capacity(config.generations);
    let mut best: Option<Individual<D::Payload>> = None;

    for generation in 0..config.generations {
        let mut failures = 0usize;
        for ind in pool.iter_mut() {
            if ind.fitness.is_some() {
                continue;
            }
            match evaluate(&ind.payload) {
                Ok(eval) if eval.fitness.source == source => {
                    ind.fitness = Some(eval.fitness);
                    ind.class = eval.class;
                }
                _ => {
                    failures += 1;
                    ind.fitness = Some(FitnessValue {
                        value: 0.0,
                        source,
                    });
                }
            }
            debug_assert_eq!(domain.dimension(&ind.payload), dim);
        }

        let gen_best = pool
            .iter()
            .max_by(|a, b| {
                a.fitness_value()
                    .partial_cmp(&b.fitness_value())
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .expect("pool is nonempty");
        let mean =
            pool.iter().map(|i| i.fitness_value()).sum::<f64>() / pool.len() as f64;
        let gen_best_value = gen_best.fitness_value();
        if best
            .as_ref()
            .map(|b| gen_best_value > b.fitness_value())
            .unwrap_or(true)
        {
            best = Some(gen_best.clone());
        }
        // Per-generation best; the elite's cached fitness keeps it monotone.
        history.push(GenerationStats {
            generation,
            best: gen_best_value,
            mean,
            source,
            failures,
        });

        if generation + 1 == config.generations {
            break;
        }

        let parents = select_top(&pool, config, domain.preserves_classes());
        let elite = best.as_ref().expect("best recorded").clone();
        let mut next: Vec<Individual<D::Payload>> = Vec::with_capacity(config.pool_size);
        next.push(elite);
        while next.len() < config.pool_size {
            let a = &parents[rng.gen_range(0..parents.len())];
            let b = &parents[rng.gen_range(0..parents.len())];
            let child = domain.crossover(config, &a.payload, &b.payload, &mut rng)?;
            let child = domain.mutate(config, &child, &mut rng);
            debug_assert_eq!(domain.dimension(&child), dim);
            next.push(Individual::new(child));
        }
        pool = next;
    }

    pool.sort_by(|a, b| {
        b.fitness_value()
            .partial_cmp(&a.fitness_value())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(GaOutcome {
        best: best.expect("at least one generation ran"),
        pool,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackError {
    InvalidConfig(&'static str),
    InvalidConfigField { name: &'static str },
    InvalidFitness { value: f64 },
    PayloadLengthMismatch { a: usize, b: usize },
    PayloadShapeMismatch,
    SearchSpaceTooLarge { candidates: u64, limit: u64 },
    NonFiniteGradient { step: usize },
    Nlp(crate::nlp::NlpError),
    Vision(crate::vision::VisionError),
    Energy(crate::energy::EnergyError),
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::InvalidConfig(msg) => write!(f, "invalid GA config: {msg}"),
            AttackError::InvalidConfigField { name } => {
                write!(f, "GA config field '{name}' out of range")
            }
            AttackError::InvalidFitness { value } => {
                write!(f, "fitness must be finite and nonnegative, got {value}")
            }
            AttackError::PayloadLengthMismatch { a, b } => {
                write!(f, "crossover requires equal lengths, got {a} and {b}")
            }
            AttackError::PayloadShapeMismatch => write!(f, "crossover requires equal shapes"),
            AttackError::SearchSpaceTooLarge { candidates, limit } => {
                write!(f, "exhaustive search over {candidates} candidates exceeds {limit}")
            }
            AttackError::NonFiniteGradient { step } => {
                write!(f, "non-finite gradient at optimizer step {step}")
            }
            AttackError::Nlp(e) => write!(f, "{e}"),
            AttackError::Vision(e) => write!(f, "{e}"),
            AttackError::Energy(e) => write!(f, "{e}"),
        }
    }
}

impl From<crate::nlp::NlpError> for AttackError {
    fn from(e: crate::nlp::NlpError) -> Self {
        AttackError::Nlp(e)
    }
}

impl From<crate::vision::VisionError> for AttackError {
    fn from(e: crate::vision::VisionError) -> Self {
        AttackError::Vision(e)
    }
}

impl From<crate::energy::EnergyError> for AttackError {
    fn from(e: crate::energy::EnergyError) -> Self {
        AttackError::Energy(e)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AttackError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use core::convert::Infallible;

    fn tiny_config(seed: u64) -> GaConfig {
        GaConfig {
            pool_size: 20,
            generations: 10,
            seed,
            ..GaConfig::default()
        }
    }

    fn count_a_fitness(payload: &String) -> Result<Evaluation, Infallible> {
        let count = payload.chars().filter(|c| *c == 'a').count() as f64;
        Ok(Evaluation {
            fitness: FitnessValue {
                value: count,
                source: FitnessSource::EstimatedOps,
            },
            class: None,
        })
    }

    #[test]
    fn constant_fitness_changes_nothing() {
        let domain = NlpDomain {
            alphabet: "ab".chars().collect(),
            length: 6,
        };
        let config = tiny_config(1);
        let outcome = ga_run(&config, &domain, FitnessSource::EstimatedOps, |_: &String| {
            Ok::<_, Infallible>(Evaluation {
                fitness: FitnessValue {
                    value: 5.0,
                    source: FitnessSource::EstimatedOps,
                },
                class: None,
            })
        })
        .unwrap();
        assert_eq!(outcome.history[0].best, 5.0);
        assert_eq!(outcome.history.last().unwrap().best, 5.0);
    }

    #[test]
    fn ga_converges_to_all_a_string() {
        let domain = NlpDomain {
            alphabet: "abcdefgh".chars().collect(),
            length: 8,
        };
        let config = GaConfig {
            pool_size: 50,
            generations: 200,
            seed: 7,
            ..GaConfig::default()
        };
        let outcome = ga_run(&config, &domain, FitnessSource::EstimatedOps, count_a_fitness)
            .unwrap();
        assert_eq!(outcome.best.payload, "aaaaaaaa");
        assert_eq!(outcome.best.fitness.unwrap().value, 8.0);
    }

    #[test]
    fn best_fitness_is_monotone_across_generations() {
        let domain = NlpDomain {
            alphabet: "abcz".chars().collect(),
            length: 10,
        };
        let config = GaConfig {
            pool_size: 30,
            generations: 40,
            seed: 3,
            ..GaConfig::default()
        };
        let outcome =
            ga_run(&config, &domain, FitnessSource::EstimatedOps, count_a_fitness).unwrap();
        for pair in outcome.history.windows(2) {
            assert!(pair[1].best >= pair[0].best);
        }
    }

    #[test]
    fn identical_seed_reproduces_history_and_best() {
        let domain = NlpDomain {
            alphabet: "abxy".chars().collect(),
            length: 8,
        };
        let config = GaConfig {
            pool_size: 25,
            generations: 30,
            seed: 99,
            ..GaConfig::default()
        };
        let a = ga_run(&config, &domain, FitnessSource::EstimatedOps, count_a_fitness).unwrap();
        let b = ga_run(&config, &domain, FitnessSource::EstimatedOps, count_a_fitness).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best.payload, b.best.payload);
    }

    #[test]
    fn payload_dimension_is_conserved() {
        let domain = NlpDomain {
            alphabet: "ab ".chars().collect(),
            length: 12,
        };
        let config = tiny_config(5);
        let outcome =
            ga_run(&config, &domain, FitnessSource::EstimatedOps, count_a_fitness).unwrap();
        for ind in &outcome.pool {
            assert_eq!(ind.payload.chars().count(), 12);
        }
    }

    #[test]
    fn failed_evaluations_score_worst_and_are_counted() {
        let domain = NlpDomain {
            alphabet: "ab".chars().collect(),
            length: 4,
        };
        let config = tiny_config(11);
        let outcome = ga_run(&config, &domain, FitnessSource::EstimatedOps, |p: &String| {
            if p.starts_with('a') {
                Err("boom")
            } else {
                count_a_fitness(p).map_err(|_| "unreachable")
            }
        })
        .unwrap();
        assert!(outcome.history[0].failures > 0);
        // 'a'-prefixed strings were scored 0, so the best never starts with 'a'.
        assert!(!outcome.best.payload.starts_with('a'));
    }

    #[test]
    fn crossover_nlp_no_flip_takes_left_of_a() {
        let mut rng = crate::rng_from_seed(0);
        let child = crossover_nlp("aaaa", "bbbb", 0.0, &mut rng).unwrap();
        assert_eq!(child, "aabb");
    }

    #[test]
    fn crossover_nlp_flip_swaps_parent_roles() {
        let mut rng = crate::rng_from_seed(0);
        let child = crossover_nlp("aaaa", "bbbb", 1.0, &mut rng).unwrap();
        assert_eq!(child, "bbaa");
    }

    #[test]
    fn crossover_nlp_odd_length_splits_left_short() {
        let mut rng = crate::rng_from_seed(0);
        let child = crossover_nlp("aaaaa", "bbbbb", 0.0, &mut rng).unwrap();
        assert_eq!(child, "aabbb");
    }

    #[test]
    fn crossover_nlp_rejects_length_mismatch() {
        let mut rng = crate::rng_from_seed(0);
        assert!(crossover_nlp("aaa", "bbbb", 0.0, &mut rng).is_err());
    }

    #[test]
    fn crossover_cv_identical_parents_yield_identical_child() {
        let mut rng = crate::rng_from_seed(1);
        let a = Image::filled(1, 4, 4, 0.3);
        let child = crossover_cv(&a, &a, &mut rng).unwrap();
        assert_eq!(child, a);
    }

    #[test]
    fn crossover_cv_child_pixels_come_from_parents() {
        let mut rng = crate::rng_from_seed(2);
        let a = Image::filled(1, 10, 10, 0.25);
        let b = Image::filled(1, 10, 10, 0.75);
        let child = crossover_cv(&a, &b, &mut rng).unwrap();
        let mut from_a = 0usize;
        for v in &child.data {
            assert!(*v == 0.25 || *v == 0.75);
            if *v == 0.25 {
                from_a += 1;
            }
        }
        // Mask density around one half; loose binomial bound for n=100.
        assert!(from_a > 25 && from_a < 75);
    }

    #[test]
    fn crossover_cv_mask_density_near_half_on_large_image() {
        let mut rng = crate::rng_from_seed(3);
        let a = Image::filled(1, 100, 100, 0.0);
        let b = Image::filled(1, 100, 100, 1.0);
        let child = crossover_cv(&a, &b, &mut rng).unwrap();
        let ones = child.data.iter().filter(|v| **v == 1.0).count();
        let frac = ones as f64 / 10_000.0;
        // ~6 standard deviations of Bin(10^4, 0.5).
        assert!((frac - 0.5).abs() < 0.03, "mask fraction {frac}");
    }

    #[test]
    fn mutate_nlp_rate_zero_is_identity() {
        let mut rng = crate::rng_from_seed(4);
        let alphabet: Vec<char> = "abc".chars().collect();
        assert_eq!(mutate_nlp("abcabc", &mut rng, 0.0, &alphabet), "abcabc");
    }

    #[test]
    fn mutate_nlp_rate_one_resamples_every_position() {
        let alphabet: Vec<char> = "xyz".chars().collect();
        let mut rng = crate::rng_from_seed(5);
        let out = mutate_nlp("aaaaaa", &mut rng, 1.0, &alphabet);
        assert_eq!(out.chars().count(), 6);
        for c in out.chars() {
            assert!(alphabet.contains(&c), "position not resampled");
        }
    }

    #[test]
    fn mutate_nlp_changed_fraction_tracks_rate() {
        let alphabet: Vec<char> = "abcdefghij".chars().collect();
        let mut rng = crate::rng_from_seed(6);
        let rate = 0.3;
        let trials = 400;
        let len = 50;
        let base: String = core::iter::repeat('a').take(len).collect();
        let mut changed = 0usize;
        for _ in 0..trials {
            let out = mutate_nlp(&base, &mut rng, rate, &alphabet);
            changed += out.chars().filter(|c| *c != 'a').count();
        }
        let observed = changed as f64 / (trials * len) as f64;
        let expected = rate * (1.0 - 1.0 / alphabet.len() as f64);
        assert!(
            (observed - expected).abs() < 0.02,
            "observed {observed}, expected {expected}"
        );
    }

    #[test]
    fn mutate_cv_changes_exactly_one_pixel_in_hundred() {
        let mut rng = crate::rng_from_seed(7);
        let image = Image::filled(1, 10, 10, 0.5);
        let out = mutate_cv(&image, &mut rng, 0.01);
        let changed = out
            .data
            .iter()
            .zip(image.data.iter())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 1);
        for v in &out.data {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn mutate_cv_repeated_application_stays_in_range() {
        let mut rng = crate::rng_from_seed(8);
        let mut image = Image::filled(1, 6, 6, 0.9);
        for _ in 0..50 {
            image = mutate_cv(&image, &mut rng, 0.05);
        }
        for v in &image.data {
            assert!((0.0..=1.0).contains(v));
        }
    }

    fn pool_of(fitness: &[f64]) -> Vec<Individual<String>> {
        fitness
            .iter()
            .enumerate()
            .map(|(i, f)| Individual {
                payload: i.to_string(),
                fitness: Some(FitnessValue {
                    value: *f,
                    source: FitnessSource::EstimatedOps,
                }),
                class: None,
            })
            .collect()
    }

    #[test]
    fn select_top_keeps_one_in_ten() {
        let pool = pool_of(&[1.0, 9.0, 2.0, 8.0, 3.0, 7.0, 4.0, 6.0, 5.0, 0.0]);
        let config = GaConfig::default();
        let survivors = select_top(&pool, &config, false);
        assert_eq!(survivors.len(), 1);
        assert_eq!(survivors[0].payload, "1");
    }

    #[test]
    fn select_top_equal_fitness_keeps_first() {
        let pool = pool_of(&[5.0; 10]);
        let survivors = select_top(&pool, &GaConfig::default(), false);
        assert_eq!(survivors[0].payload, "0");
    }

    #[test]
    fn select_top_preserves_twenty_classes() {
        // 25 classes, one individual each, descending fitness.
        let mut pool = pool_of(&(0..25).map(|i| 25.0 - i as f64).collect::<Vec<_>>());
        for (i, ind) in pool.iter_mut().enumerate() {
            ind.class = Some(i);
        }
        let config = GaConfig {
            selection_fraction: 0.10,
            min_classes_preserved: 20,
            ..GaConfig::default()
        };
        let survivors = select_top(&pool, &config, true);
        let mut classes: Vec<usize> = survivors.iter().filter_map(|i| i.class).collect();
        classes.sort_unstable();
        classes.dedup();
        assert!(classes.len() >= 20, "only {} classes survived", classes.len());
    }

    #[test]
    fn config_validation_rejects_small_pool_and_bad_fractions() {
        let mut config = GaConfig::default();
        config.pool_size = 5;
        assert!(config.validate().is_err());
        config.pool_size = 100;
        config.selection_fraction = 0.0;
        assert!(config.validate().is_err());
        config.selection_fraction = 1.5;
        assert!(config.validate().is_err());
    }
}
