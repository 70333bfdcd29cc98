//! Cross-module property tests: the invariants that hold for every input,
//! not just the worked examples.

use proptest::prelude::*;

use sponge_core::attacks::{
    exhaustive_worst_case, ga_run, Evaluation, FitnessSource, FitnessValue, GaConfig, NlpDomain,
};
use sponge_core::energy::{
    physical_energy, simulate_energy, ActivationTrace, AsicCostModel, LayerTraceEntry,
    PhysicalEnergyParams,
};
use sponge_core::nlp::{
    bpe_encode, detokenize, encode_text, normalize, pipeline_cost_estimate, translate,
    TextPipeline,
};
use sponge_core::stats::{mann_whitney_u, pair_count_u};
use sponge_core::{corpus, rng_from_seed, zoo};

fn alphabet_string(max_len: usize) -> impl Strategy<Value = String> {
    let chars: Vec<char> = {
        let mut c = zoo::default_alphabet().chars;
        c.push(' ');
        c
    };
    proptest::collection::vec(proptest::sample::select(chars), 0..max_len)
        .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every string over the alphabet encodes, and detokenization is the
    /// inverse of encoding up to normalization.
    #[test]
    fn tokenizer_total_and_round_trips(text in alphabet_string(40)) {
        let vocab = zoo::default_vocab();
        let words = normalize(&text, vocab.alphabet());
        let seq = bpe_encode(&words, &vocab);
        prop_assert_eq!(seq.l_t(), seq.ids.len());
        let rebuilt = detokenize(&seq.ids, &vocab).unwrap();
        prop_assert_eq!(normalize(&rebuilt, vocab.alphabet()), words);
    }

    /// Raising mult_nonzero (mult_total fixed) never lowers optimized
    /// energy, and the ratio stays in (0, 1].
    #[test]
    fn energy_monotone_in_nonzero_multiplies(
        mult_total in 1u64..10_000,
        dram in 1u64..10_000,
        nz_lo in 0.0f64..1.0,
        nz_hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = if nz_lo <= nz_hi { (nz_lo, nz_hi) } else { (nz_hi, nz_lo) };
        let cost = AsicCostModel::default();
        let entry = |nz: u64| {
            let mut t = ActivationTrace::new();
            t.push(LayerTraceEntry {
                layer_name: "l".into(),
                mult_total,
                mult_nonzero: nz,
                act_total: 10,
                act_nonzero: 5,
                dram_words_raw: dram,
                dram_words_compressed: dram,
            });
            t
        };
        let a = simulate_energy(&entry((lo * mult_total as f64) as u64), &cost).unwrap();
        let b = simulate_energy(&entry((hi * mult_total as f64) as u64), &cost).unwrap();
        prop_assert!(b.energy_optimized_pj >= a.energy_optimized_pj);
        for r in [&a, &b] {
            prop_assert!(r.energy_ratio > 0.0 && r.energy_ratio <= 1.0);
        }
    }

    /// The ratio hits 1 exactly when nothing is skippable or compressible.
    #[test]
    fn energy_ratio_is_one_iff_nothing_to_optimize(
        mult_total in 1u64..1000,
        mult_nonzero_frac in 0.0f64..=1.0,
        dram in 1u64..1000,
        compress in 0u64..1000,
    ) {
        let mult_nonzero = (mult_nonzero_frac * mult_total as f64) as u64;
        let compressed = compress.min(dram);
        let mut t = ActivationTrace::new();
        t.push(LayerTraceEntry {
            layer_name: "l".into(),
            mult_total,
            mult_nonzero,
            act_total: 1,
            act_nonzero: 1,
            dram_words_raw: dram,
            dram_words_compressed: compressed,
        });
        let report = simulate_energy(&t, &AsicCostModel::default()).unwrap();
        let nothing_to_skip = mult_nonzero == mult_total && compressed == dram;
        prop_assert_eq!(report.energy_ratio == 1.0, nothing_to_skip);
    }

    /// Energy strictly increases in the attacker-facing dynamic knobs.
    #[test]
    fn physical_energy_increasing_in_dynamic_knobs(
        alpha in 0.01f64..0.99,
        freq in 1e6f64..1e10,
        time in 0.1f64..100.0,
    ) {
        let base = PhysicalEnergyParams {
            alpha,
            frequency_hz: freq,
            duration_s: time,
            ..PhysicalEnergyParams::default()
        };
        let e0 = physical_energy(&base).unwrap();
        let bump = 1.01;
        let e_alpha = physical_energy(&PhysicalEnergyParams { alpha: alpha * bump, ..base.clone() }).unwrap();
        let e_freq = physical_energy(&PhysicalEnergyParams { frequency_hz: freq * bump, ..base.clone() }).unwrap();
        let e_time = physical_energy(&PhysicalEnergyParams { duration_s: time * bump, ..base.clone() }).unwrap();
        prop_assert!(e_alpha > e0);
        prop_assert!(e_freq > e0);
        prop_assert!(e_time > e0);
    }

    /// Rank-based U equals brute-force pair counting, and the two sides sum
    /// to the number of pairs, ties included.
    #[test]
    fn mwu_matches_pair_count_oracle(
        a in proptest::collection::vec(0i32..8, 1..12),
        b in proptest::collection::vec(0i32..8, 1..12),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        prop_assert_eq!(r.u_a, pair_count_u(&a, &b));
        prop_assert_eq!(r.u_a + r.u_b, (a.len() * b.len()) as f64);
        prop_assert!(r.p_one_sided > 0.0 && r.p_one_sided <= 1.0);
    }
}

/// The closed-form white-box cost estimator reproduces the instrumented
/// multiply count on arbitrary pipeline inputs.
#[test]
fn cost_estimator_equals_trace_exactly() {
    let vocab = zoo::default_vocab();
    let model = zoo::toy_translator(3);
    let mut rng = rng_from_seed(4242);
    let mut checked = 0;
    while checked < 40 {
        let len = 1 + (checked % 24);
        let text = corpus::random_string(&mut rng, len, vocab.alphabet());
        let input = encode_text(&text, &vocab);
        if input.ids.is_empty() {
            continue;
        }
        let out = translate(&model, &input).unwrap();
        assert_eq!(
            pipeline_cost_estimate(&out.dims, &model),
            out.trace.mult_total()
        );
        checked += 1;
    }
}

/// With fixed per-multiply and per-word prices (both optimisations off),
/// ranking a pool by the closed-form op estimate picks the same winner as
/// ranking by simulated energy.
#[test]
fn estimated_ops_and_simulated_energy_agree_on_argmax() {
    let vocab = zoo::default_vocab();
    let model = zoo::toy_translator(11);
    let cost = AsicCostModel::unoptimized();
    let pipeline = TextPipeline::new(vocab, model.clone(), cost);

    for seed in [1u64, 2, 3, 4, 5, 6, 7, 8] {
        let mut rng = rng_from_seed(seed);
        let pool = corpus::random_strings(&mut rng, 12, 30, pipeline.vocab.alphabet());
        let mut best_by_ops: Option<(usize, u64)> = None;
        let mut best_by_energy: Option<(usize, f64)> = None;
        for (i, text) in pool.iter().enumerate() {
            let run = match pipeline.evaluate(text) {
                Ok(run) => run,
                Err(_) => continue,
            };
            let ops = pipeline_cost_estimate(&run.translation.dims, &model);
            let energy = run.energy_pj();
            if best_by_ops.map(|(_, v)| ops > v).unwrap_or(true) {
                best_by_ops = Some((i, ops));
            }
            if best_by_energy.map(|(_, v)| energy > v).unwrap_or(true) {
                best_by_energy = Some((i, energy));
            }
        }
        assert_eq!(
            best_by_ops.unwrap().0,
            best_by_energy.unwrap().0,
            "argmax disagreement on seed {seed}"
        );
    }
}

/// The GA never finds anything above the exhaustive optimum, and with a
/// modest budget it gets close.
#[test]
fn ga_bounded_by_exhaustive_worst_case() {
    let vocab = zoo::default_vocab();
    let pipeline = TextPipeline::new(
        vocab,
        zoo::toy_translator(7),
        AsicCostModel::default(),
    );
    let alphabet: Vec<char> = "ahst/".chars().collect();
    let length = 6;

    let (_, oracle_energy) = exhaustive_worst_case(&pipeline, &alphabet, length).unwrap();

    let domain = NlpDomain {
        alphabet: alphabet.clone(),
        length,
    };
    let config = GaConfig {
        pool_size: 40,
        generations: 60,
        seed: 17,
        ..GaConfig::default()
    };
    let p2 = pipeline.clone();
    let outcome = ga_run(
        &config,
        &domain,
        FitnessSource::SimulatedEnergy,
        |text: &String| {
            let run = p2.evaluate(text)?;
            Ok::<_, sponge_core::nlp::NlpError>(Evaluation {
                fitness: FitnessValue::new(run.energy_pj(), FitnessSource::SimulatedEnergy)
                    .unwrap(),
                class: None,
            })
        },
    )
    .unwrap();

    let best = outcome.best.fitness.unwrap().value;
    assert!(best <= oracle_energy, "GA {best} exceeded oracle {oracle_energy}");
    assert!(
        best >= 0.8 * oracle_energy,
        "GA {best} below 80% of oracle {oracle_energy}"
    );
}

/// Natural, random and sponge image classes separate statistically on
/// simulated CNN energy within a few hundred observations per class.
#[test]
fn cnn_class_energies_separate_statistically() {
    use sponge_core::stats::ExpectedOrdering;
    use sponge_core::vision::{cnn_forward, Image};

    let model = zoo::reference_cnn();
    let cost = AsicCostModel::default();
    let n = 300;
    let energy_of = |img: &Image| -> f64 {
        let (_, trace, _) = cnn_forward(&model, img).unwrap();
        simulate_energy(&trace, &cost).unwrap().energy_optimized_pj
    };

    let mut rng = rng_from_seed(909);
    let natural: Vec<f64> = (0..n)
        .map(|i| energy_of(&corpus::blob_image(&mut rng, i % 10, 1, 8, 8)))
        .collect();
    let random: Vec<f64> = (0..n)
        .map(|_| energy_of(&corpus::random_image(&mut rng, 1, 8, 8)))
        .collect();
    // Cheap sponges: a short L-BFGS polish of blob inits.
    let sponge: Vec<f64> = (0..n)
        .map(|i| {
            let init = corpus::blob_image(&mut rng, i % 10, 1, 8, 8);
            let result = sponge_core::attacks::lbfgs_attack(
                &model,
                &init,
                &sponge_core::attacks::LbfgsConfig {
                    max_steps: 40,
                    ..Default::default()
                },
            )
            .unwrap();
            energy_of(&result.image)
        })
        .collect();

    let report = sponge_core::stats::compare_sample_classes(
        &natural,
        &random,
        &sponge,
        ExpectedOrdering::SpongeNaturalRandom,
        0.01,
    )
    .unwrap();
    for pair in &report.pairs {
        assert!(
            pair.result.p_one_sided < 0.01,
            "{} > {}: p = {}",
            pair.greater,
            pair.lesser,
            pair.result.p_one_sided
        );
    }
    let n_required = report.n_required.expect("separation reached");
    assert!(n_required <= 300, "needed {n_required} observations");
}
