//! Config-driven experiment runner: one task per config file, all outputs
//! into one directory, every file stamped with the config hash and seed.
//! Histories are flushed incrementally-shaped (written as soon as runs
//! finish), so partial results survive an interrupted session.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use sponge_core::attacks::{
    exhaustive_worst_case, ga_run, lbfgs_attack, CvDomain, Evaluation, FitnessSource,
    FitnessValue, LbfgsConfig, NlpDomain,
};
use sponge_core::defense::{guarded_infer, profile_natural, CostSource, GuardedInference};
use sponge_core::energy::simulate_energy;
use sponge_core::nlp::{pipeline_cost_estimate, TextPipeline, ToyTranslator};
use sponge_core::stats::{compare_sample_classes, ExpectedOrdering};
use sponge_core::vision::{cnn_forward, ibp_max_density, CnnModel, Image, InputBox};
use sponge_core::{corpus, rng_from_seed, zoo};

use crate::config::{config_hash, ExperimentConfig, Task};
use crate::formats::{self, Provenance};
use crate::service::{blackbox_latency_fitness, serve, Client, ServiceReply};

/// What a finished task hands back to the CLI.
pub struct RunSummary {
    pub headline: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    fn new() -> Self {
        RunSummary {
            headline: Vec::new(),
            files: Vec::new(),
        }
    }

    fn file(&mut self, path: PathBuf) {
        self.files.push(path);
    }

    fn line(&mut self, line: impl Into<String>) {
        self.headline.push(line.into());
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    let prov = Provenance {
        config_hash: config_hash(config),
        seed: config.seed,
    };
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;

    match config.task {
        Task::AttackNlp => attack_nlp(config, &prov),
        Task::AttackCv => attack_cv(config, &prov),
        Task::AttackBlackbox => attack_blackbox(config, &prov),
        Task::Simulate => simulate_task(config, &prov),
        Task::Transfer => transfer_task(config, &prov),
        Task::ProfileDefense => profile_defense(config, &prov),
        Task::Stats => stats_task(config, &prov),
        Task::Serve => serve_task(config),
    }
}

// --- shared plumbing ---------------------------------------------------------

fn load_vocab(config: &ExperimentConfig) -> Result<sponge_core::nlp::Vocab> {
    Ok(match &config.vocab.path {
        Some(path) => formats::load_vocab(path)?,
        None => zoo::default_vocab(),
    })
}

fn load_translator(choice: &crate::config::TranslatorConfig, default_seed: u64) -> Result<ToyTranslator> {
    Ok(match (&choice.path, choice.seed) {
        (Some(path), _) => formats::load_translator(path)?,
        (None, Some(seed)) => zoo::toy_translator(seed),
        (None, None) => zoo::toy_translator(default_seed),
    })
}

fn build_pipeline(config: &ExperimentConfig) -> Result<TextPipeline> {
    Ok(TextPipeline::new(
        load_vocab(config)?,
        load_translator(&config.translator, 7)?,
        config.cost_model.build(),
    ))
}

fn load_cnn_model(config: &ExperimentConfig) -> Result<CnnModel> {
    Ok(match config.cv.model.as_str() {
        "reference" => zoo::reference_cnn(),
        path => formats::load_cnn(Path::new(path))?,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn energy_fitness<'a>(
    pipeline: &'a TextPipeline,
    source: FitnessSource,
) -> impl FnMut(&String) -> Result<Evaluation, sponge_core::nlp::NlpError> + 'a {
    move |text: &String| {
        let run = pipeline.evaluate(text)?;
        let value = match source {
            FitnessSource::EstimatedOps => {
                pipeline_cost_estimate(&run.translation.dims, &pipeline.model) as f64
            }
            _ => run.energy_pj(),
        };
        Ok(Evaluation {
            fitness: FitnessValue::new(value, source)
                .expect("energy and op counts are finite and nonnegative"),
            class: None,
        })
    }
}

fn write_history(
    out_dir: &Path,
    prov: &Provenance,
    history: &[sponge_core::attacks::GenerationStats],
) -> Result<(PathBuf, PathBuf)> {
    let history_path = out_dir.join("history.tsv");
    formats::save_history(&history_path, history, prov)?;
    let plot_path = out_dir.join("history_plot.tsv");
    let x: Vec<f64> = history.iter().map(|h| h.generation as f64).collect();
    let best: Vec<f64> = history.iter().map(|h| h.best).collect();
    let mean_curve: Vec<f64> = history.iter().map(|h| h.mean).collect();
    formats::emit_plot_data(
        &plot_path,
        "generation",
        &x,
        &[("best", best), ("mean", mean_curve)],
        prov,
    )?;
    Ok((history_path, plot_path))
}

// --- attack-nlp ---------------------------------------------------------------

fn attack_nlp(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let pipeline = build_pipeline(config)?;
    let length = config.nlp.input_chars;
    let source = match config.ga.fitness.as_str() {
        "estimated-ops" => FitnessSource::EstimatedOps,
        _ => FitnessSource::SimulatedEnergy,
    };

    // Baselines.
    let mut rng = rng_from_seed(config.seed ^ 0x01);
    let naturals = corpus::natural_sentences(&mut rng, length, config.nlp.natural_corpus);
    let mut rng = rng_from_seed(config.seed ^ 0x02);
    let randoms = corpus::random_strings(
        &mut rng,
        length,
        config.nlp.natural_corpus,
        pipeline.vocab.alphabet(),
    );
    let eval_energy = |texts: &[String]| -> (Vec<f64>, Vec<f64>) {
        let mut energies = Vec::new();
        let mut tokens = Vec::new();
        for t in texts {
            if let Ok(run) = pipeline.evaluate(t) {
                energies.push(run.energy_pj());
                tokens.push(run.input.l_t() as f64);
            }
        }
        (energies, tokens)
    };
    let (nat_e, nat_t) = eval_energy(&naturals);
    let (rnd_e, rnd_t) = eval_energy(&randoms);

    // The attack.
    let domain = NlpDomain::from_alphabet(pipeline.vocab.alphabet(), length);
    let ga_config = config.ga.build(config.seed);
    let outcome = ga_run(&ga_config, &domain, source, energy_fitness(&pipeline, source))
        .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?;

    let (history_path, plot_path) = write_history(&config.out_dir, prov, &outcome.history)?;
    summary.file(history_path);
    summary.file(plot_path);

    let best_run = pipeline.evaluate(&outcome.best.payload)?;
    let best_payloads: Vec<(String, f64, &str)> = outcome
        .pool
        .iter()
        .take(10)
        .map(|i| {
            (
                i.payload.clone(),
                i.fitness.map(|f| f.value).unwrap_or(0.0),
                source.as_str(),
            )
        })
        .collect();
    let best_path = config.out_dir.join("best.tsv");
    formats::save_best_text(&best_path, &best_payloads, prov)?;
    summary.file(best_path);

    let trace_path = config.out_dir.join("best_trace.txt");
    formats::save_trace(&trace_path, &best_run.translation.trace, prov)?;
    summary.file(trace_path);
    let report_path = config.out_dir.join("best_report.txt");
    formats::save_report(&report_path, &best_run.report, prov)?;
    summary.file(report_path);

    // Natural / Random / Sponge table.
    let mut text = prov.header("summary");
    writeln!(text, "task = attack-nlp").unwrap();
    writeln!(text, "input_chars = {length}").unwrap();
    writeln!(text, "fitness = {}", source.as_str()).unwrap();
    let nat_mean = mean(&nat_e);
    let rnd_mean = mean(&rnd_e);
    let sponge_e = best_run.energy_pj();
    writeln!(text, "natural_mean_energy_mj = {:?}", nat_mean * 1e-9).unwrap();
    writeln!(text, "random_mean_energy_mj = {:?}", rnd_mean * 1e-9).unwrap();
    writeln!(text, "sponge_best_energy_mj = {:?}", sponge_e * 1e-9).unwrap();
    writeln!(text, "random_vs_natural = {:.3}", rnd_mean / nat_mean).unwrap();
    writeln!(text, "sponge_vs_natural = {:.3}", sponge_e / nat_mean).unwrap();
    writeln!(text, "natural_mean_tokens = {:.3}", mean(&nat_t)).unwrap();
    writeln!(text, "random_mean_tokens = {:.3}", mean(&rnd_t)).unwrap();
    writeln!(text, "sponge_tokens = {}", best_run.input.l_t()).unwrap();
    writeln!(text, "sponge_decode_steps = {}", best_run.translation.dims.l_tout).unwrap();
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(&summary_path, &text)?;
    summary.file(summary_path);

    summary.line(format!(
        "sponge energy {:.3} mJ = {:.2}x natural mean ({} tokens from {} chars)",
        sponge_e * 1e-9,
        sponge_e / nat_mean,
        best_run.input.l_t(),
        length
    ));
    Ok(summary)
}

// --- attack-cv ------------------------------------------------------------------

fn attack_cv(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let model = load_cnn_model(config)?;
    let cost = config.cost_model.build();
    let (c, h, w) = model.input_shape;
    if (h, w) != (config.cv.height, config.cv.width) {
        bail!(
            "cv.height/width {}x{} do not match model input {}x{}",
            config.cv.height,
            config.cv.width,
            h,
            w
        );
    }

    let cv_fitness = |img: &Image| -> Result<Evaluation, sponge_core::attacks::AttackError> {
        let (logits, trace, _) = cnn_forward(&model, img)?;
        let report = simulate_energy(&trace, &cost)?;
        let class = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i);
        Ok(Evaluation {
            fitness: FitnessValue::new(report.energy_optimized_pj, FitnessSource::SimulatedEnergy)
                .expect("simulated energy is finite"),
            class,
        })
    };

    let domain = CvDomain {
        channels: c,
        height: h,
        width: w,
    };
    let ga_config = config.ga.build(config.seed);
    let outcome = ga_run(&ga_config, &domain, FitnessSource::SimulatedEnergy, cv_fitness)
        .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?;
    let (history_path, plot_path) = write_history(&config.out_dir, prov, &outcome.history)?;
    summary.file(history_path);
    summary.file(plot_path);

    let best_image_path = config.out_dir.join("best_sponge.img");
    formats::save_image(&best_image_path, &outcome.best.payload)?;
    summary.file(best_image_path);

    let stats_for = |images: &[Image]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut energy = Vec::new();
        let mut overall = Vec::new();
        let mut ratio = Vec::new();
        for img in images {
            if let Ok((_, trace, density)) = cnn_forward(&model, img) {
                if let Ok(report) = simulate_energy(&trace, &cost) {
                    energy.push(report.energy_optimized_pj);
                    ratio.push(report.energy_ratio);
                    overall.push(density.overall_density);
                }
            }
        }
        (energy, overall, ratio)
    };

    let n = config.cv.baseline_samples;
    let mut rng = rng_from_seed(config.seed ^ 0x05);
    let naturals: Vec<Image> = (0..n)
        .map(|i| corpus::blob_image(&mut rng, i % model.num_classes, c, h, w))
        .collect();
    let mut rng = rng_from_seed(config.seed ^ 0x02);
    let randoms: Vec<Image> = (0..n).map(|_| corpus::random_image(&mut rng, c, h, w)).collect();
    let ga_images: Vec<Image> = outcome.pool.iter().take(n).map(|i| i.payload.clone()).collect();

    let lbfgs_images: Vec<Image> = if config.cv.run_lbfgs {
        let lbfgs_config = LbfgsConfig {
            max_steps: config.cv.lbfgs_steps,
            memory: config.cv.lbfgs_memory,
            ..LbfgsConfig::default()
        };
        let mut rng = rng_from_seed(config.seed ^ 0x03);
        let mut images = Vec::with_capacity(n);
        for i in 0..n {
            let init = corpus::blob_image(&mut rng, i % model.num_classes, c, h, w);
            let result = lbfgs_attack(&model, &init, &lbfgs_config)
                .map_err(|e| anyhow::anyhow!("lbfgs failed: {e}"))?;
            images.push(result.image);
        }
        images
    } else {
        Vec::new()
    };

    let ibp = ibp_max_density(&model, &InputBox::unit(c, h, w))?;
    let (nat_e, nat_d, nat_r) = stats_for(&naturals);
    let (rnd_e, rnd_d, rnd_r) = stats_for(&randoms);
    let (ga_e, ga_d, ga_r) = stats_for(&ga_images);
    let (lb_e, lb_d, lb_r) = stats_for(&lbfgs_images);

    let mut text = prov.header("summary");
    writeln!(text, "task = attack-cv").unwrap();
    writeln!(text, "samples_per_row = {n}").unwrap();
    writeln!(text, "# row energy_mj energy_ratio overall_density").unwrap();
    let mut row = |name: &str, e: &[f64], d: &[f64], r: &[f64]| {
        if !e.is_empty() {
            writeln!(
                text,
                "{name} {:?} {:.4} {:.4}",
                mean(e) * 1e-9,
                mean(r),
                mean(d)
            )
            .unwrap();
        }
    };
    row("sponge_lbfgs", &lb_e, &lb_d, &lb_r);
    row("sponge_ga", &ga_e, &ga_d, &ga_r);
    row("natural", &nat_e, &nat_d, &nat_r);
    row("random", &rnd_e, &rnd_d, &rnd_r);
    writeln!(text, "maximum_density_ibp = {:.4}", ibp.overall_max_density).unwrap();
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(&summary_path, &text)?;
    summary.file(summary_path);

    summary.line(format!(
        "densities: lbfgs {:.3} >= ga {:.3} >= natural {:.3} >= random {:.3} (ibp max {:.3})",
        mean(&lb_d),
        mean(&ga_d),
        mean(&nat_d),
        mean(&rnd_d),
        ibp.overall_max_density
    ));
    Ok(summary)
}

// --- attack-blackbox ---------------------------------------------------------------

fn attack_blackbox(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let service_config = config.service.build();
    let length = config.nlp.input_chars.min(config.service.max_input_chars);

    // Self-host unless an endpoint was given.
    let (endpoint, handle) = match &config.service.endpoint {
        Some(addr) => (addr.parse()?, None),
        None => {
            let pipeline = build_pipeline(config)?;
            let guard = match &config.service.guard_profile {
                Some(path) => Some(formats::load_profile(path)?),
                None => None,
            };
            let handle = serve(pipeline, service_config.clone(), guard, config.service.port)?;
            (handle.addr, Some(handle))
        }
    };

    let mut client = Client::new(endpoint, &service_config, config.seed ^ 0x04);
    if config.service.allow_remote {
        client = client.allow_remote_endpoints();
    }

    // Optional external energy meter around the whole attack; absent or
    // unreadable counters degrade to latency-only reporting.
    let mut meter_session = config.measure.meter_path.as_ref().map(|path| {
        sponge_core::measure::MeterSession::new(crate::measure::FileMeter::new(path))
    });
    let meter_start = meter_session
        .as_mut()
        .and_then(|m| m.read_microjoules().ok());

    // Natural latency baseline, one round trip per sentence.
    let mut rng = rng_from_seed(config.seed ^ 0x01);
    let naturals = corpus::natural_sentences(&mut rng, length, config.nlp.natural_corpus.max(10));
    let mut baseline = Vec::new();
    for text in &naturals {
        let (reply, sample) = client.translate(text)?;
        if matches!(reply, ServiceReply::Ok(_)) {
            baseline.push(sample.duration_s);
        }
    }
    let baseline_mean = mean(&baseline);

    // Black-box GA over measured latency.
    let vocab = load_vocab(config)?;
    let domain = NlpDomain::from_alphabet(vocab.alphabet(), length);
    let ga_config = config.ga.build(config.seed);
    let outcome = {
        let fitness = blackbox_latency_fitness(&mut client, config.service.repeats);
        ga_run(&ga_config, &domain, FitnessSource::MeasuredLatency, fitness)
            .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?
    };
    let (history_path, plot_path) = write_history(&config.out_dir, prov, &outcome.history)?;
    summary.file(history_path);
    summary.file(plot_path);

    // Elite re-evaluation: with caching on, the resubmitted elite comes back
    // cheaper than its recorded fitness (the up-down signature).
    let best_latency = outcome.best.fitness.map(|f| f.value).unwrap_or(0.0);
    let (re_reply, _) = client.translate(&outcome.best.payload)?;
    let resubmitted_server_time = match re_reply {
        ServiceReply::Ok(r) => r.server_time_s,
        ServiceReply::Rejected { .. } => f64::NAN,
    };

    let best_payloads: Vec<(String, f64, &str)> = outcome
        .pool
        .iter()
        .take(10)
        .map(|i| {
            (
                i.payload.clone(),
                i.fitness.map(|f| f.value).unwrap_or(0.0),
                "measured-latency",
            )
        })
        .collect();
    let best_path = config.out_dir.join("best.tsv");
    formats::save_best_text(&best_path, &best_payloads, prov)?;
    summary.file(best_path);

    let mut text = prov.header("summary");
    writeln!(text, "task = attack-blackbox").unwrap();
    writeln!(text, "input_chars = {length}").unwrap();
    writeln!(text, "natural_baseline_round_trip_s = {:?}", baseline_mean).unwrap();
    writeln!(text, "best_round_trip_s = {:?}", best_latency).unwrap();
    writeln!(text, "uplift = {:.3}", best_latency / baseline_mean).unwrap();
    writeln!(text, "cache_capacity = {}", config.service.cache_capacity).unwrap();
    writeln!(
        text,
        "elite_resubmitted_server_time_s = {:?}",
        resubmitted_server_time
    )
    .unwrap();
    match (meter_start, meter_session.as_mut()) {
        (Some(start), Some(session)) => match session.read_microjoules() {
            Ok(end) => {
                writeln!(text, "meter_energy_j = {:?}", (end - start) as f64 * 1e-6).unwrap()
            }
            Err(_) => writeln!(text, "meter = unavailable (latency-only)").unwrap(),
        },
        _ => writeln!(text, "meter = none (latency-only)").unwrap(),
    }
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(&summary_path, &text)?;
    summary.file(summary_path);

    if let Some(handle) = handle {
        handle.shutdown();
    }
    summary.line(format!(
        "best round trip {:.4}s = {:.2}x natural baseline {:.4}s",
        best_latency,
        best_latency / baseline_mean,
        baseline_mean
    ));
    Ok(summary)
}

// --- simulate -----------------------------------------------------------------------

fn simulate_task(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let trace_path = config
        .simulate
        .trace_path
        .as_ref()
        .context("simulate.trace_path is required")?;
    let trace = formats::load_trace(trace_path)?;
    let report = simulate_energy(&trace, &config.cost_model.build())?;
    let report_path = config.out_dir.join("report.txt");
    formats::save_report(&report_path, &report, prov)?;
    summary.file(report_path);
    summary.line(format!(
        "optimized {:.6} mJ, unoptimized {:.6} mJ, ratio {:.4}",
        report.energy_optimized_mj(),
        report.energy_unoptimized_mj(),
        report.energy_ratio
    ));
    Ok(summary)
}

// --- transfer -----------------------------------------------------------------------

fn transfer_task(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let vocab = load_vocab(config)?;
    let cost = config.cost_model.build();
    let model_a = load_translator(&config.translator, 101)?;
    let model_b = load_translator(&config.translator_b, 202)?;
    let pipeline_a = TextPipeline::new(vocab.clone(), model_a, cost.clone());
    let pipeline_b = TextPipeline::new(vocab, model_b, cost);
    let length = config.nlp.input_chars;

    let domain = NlpDomain::from_alphabet(pipeline_a.vocab.alphabet(), length);
    let ga_config = config.ga.build(config.seed);
    let outcome = ga_run(
        &ga_config,
        &domain,
        FitnessSource::SimulatedEnergy,
        energy_fitness(&pipeline_a, FitnessSource::SimulatedEnergy),
    )
    .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?;

    let sponges: Vec<String> = outcome
        .pool
        .iter()
        .take(config.transfer.sponges)
        .map(|i| i.payload.clone())
        .collect();

    let mut rng = rng_from_seed(config.seed ^ 0x06);
    let mut rows = Vec::new();
    let mut positive = 0usize;
    let mut negative = 0usize;
    for sponge in &sponges {
        let e_b = pipeline_b.evaluate(sponge).map(|r| r.energy_pj()).unwrap_or(0.0);
        let random = corpus::random_string(&mut rng, length, pipeline_b.vocab.alphabet());
        let e_rand = pipeline_b.evaluate(&random).map(|r| r.energy_pj()).unwrap_or(0.0);
        if e_b > e_rand {
            positive += 1;
        } else if e_b < e_rand {
            negative += 1;
        }
        rows.push((sponge.clone(), e_b, e_rand));
    }
    let p_sign = sign_test_p(positive, positive + negative);

    let mut text = prov.header("transfer");
    writeln!(text, "# sponge energy_on_b_pj random_energy_on_b_pj").unwrap();
    for (s, eb, er) in &rows {
        writeln!(text, "{s:?}\t{eb:?}\t{er:?}").unwrap();
    }
    let table_path = config.out_dir.join("transfer.tsv");
    std::fs::write(&table_path, &text)?;
    summary.file(table_path);

    let sponge_mean = mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let random_mean = mean(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    let mut text = prov.header("summary");
    writeln!(text, "task = transfer").unwrap();
    writeln!(text, "sponges = {}", rows.len()).unwrap();
    writeln!(text, "positive_uplift = {positive}").unwrap();
    writeln!(text, "negative_uplift = {negative}").unwrap();
    writeln!(text, "sign_test_p = {p_sign:e}").unwrap();
    writeln!(text, "sponge_mean_energy_on_b_mj = {:?}", sponge_mean * 1e-9).unwrap();
    writeln!(text, "random_mean_energy_on_b_mj = {:?}", random_mean * 1e-9).unwrap();
    writeln!(text, "mean_uplift = {:.3}", sponge_mean / random_mean).unwrap();
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(&summary_path, &text)?;
    summary.file(summary_path);

    summary.line(format!(
        "transfer uplift {:.2}x over random on model B; sign test +{positive}/-{negative}, p = {p_sign:.2e}",
        sponge_mean / random_mean
    ));
    Ok(summary)
}

/// One-sided sign test: P(Bin(n, 1/2) >= k), ties dropped.
pub fn sign_test_p(k: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // Terms are <= 1 and n is small; accumulate directly.
    let mut p = 0.0f64;
    for i in k..=n {
        p += binomial_pmf_half(i, n);
    }
    p.min(1.0)
}

fn binomial_pmf_half(k: usize, n: usize) -> f64 {
    // C(n, k) / 2^n computed in log space to stay finite for larger n.
    let mut log = -(n as f64) * std::f64::consts::LN_2;
    for i in 0..k {
        log += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    log.exp()
}

// --- profile-defense ---------------------------------------------------------------

fn profile_defense(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let pipeline = build_pipeline(config)?;
    let length = config.nlp.input_chars;
    let source = match config.defense.cost_source.as_str() {
        "simulated-latency" => CostSource::SimulatedLatency {
            base_s: config.defense.latency_base_s,
            seconds_per_pj: config.defense.latency_seconds_per_pj,
        },
        _ => CostSource::SimulatedEnergy,
    };

    let mut rng = rng_from_seed(config.seed ^ 0x01);
    let corpus_texts = corpus::natural_sentences(&mut rng, length, config.defense.corpus_size);
    let corpus_refs: Vec<&str> = corpus_texts.iter().map(|s| s.as_str()).collect();
    let profile = profile_natural(&pipeline, &corpus_refs, config.defense.percentile, source)
        .map_err(|e| anyhow::anyhow!("profiling failed: {e}"))?;
    let profile_path = config.out_dir.join("profile.txt");
    formats::save_profile(&profile_path, &profile, prov)?;
    summary.file(profile_path.clone());

    // Held-out naturals.
    let mut rng = rng_from_seed(config.seed ^ 0x07);
    let holdout = corpus::natural_sentences(&mut rng, length, config.defense.holdout_size);
    let mut natural_rejected = 0usize;
    for text in &holdout {
        if matches!(
            guarded_infer(&pipeline, text, &profile)
                .map_err(|e| anyhow::anyhow!("guard failed: {e}"))?,
            GuardedInference::Rejected { .. }
        ) {
            natural_rejected += 1;
        }
    }

    // GA sponges.
    let domain = NlpDomain::from_alphabet(pipeline.vocab.alphabet(), length);
    let ga_config = config.ga.build(config.seed);
    let outcome = ga_run(
        &ga_config,
        &domain,
        FitnessSource::SimulatedEnergy,
        energy_fitness(&pipeline, FitnessSource::SimulatedEnergy),
    )
    .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?;
    let sponges: Vec<String> = outcome
        .pool
        .iter()
        .take(config.transfer.sponges.max(50))
        .map(|i| i.payload.clone())
        .collect();
    let mut sponge_rejected = 0usize;
    for text in &sponges {
        if matches!(
            guarded_infer(&pipeline, text, &profile)
                .map_err(|e| anyhow::anyhow!("guard failed: {e}"))?,
            GuardedInference::Rejected { .. }
        ) {
            sponge_rejected += 1;
        }
    }

    let sponge_rate = sponge_rejected as f64 / sponges.len() as f64;
    let natural_rate = natural_rejected as f64 / holdout.len() as f64;

    let mut text = prov.header("summary");
    writeln!(text, "task = profile-defense").unwrap();
    writeln!(text, "percentile = {}", config.defense.percentile).unwrap();
    writeln!(text, "cost_source = {}", profile.source.as_str()).unwrap();
    writeln!(text, "threshold = {:?}", profile.threshold).unwrap();
    writeln!(text, "corpus_size = {}", profile.costs.len()).unwrap();
    writeln!(text, "holdout_rejected = {natural_rejected}/{}", holdout.len()).unwrap();
    writeln!(text, "holdout_rejection_rate = {natural_rate:.4}").unwrap();
    writeln!(text, "sponges_rejected = {sponge_rejected}/{}", sponges.len()).unwrap();
    writeln!(text, "sponge_rejection_rate = {sponge_rate:.4}").unwrap();
    let summary_path = config.out_dir.join("summary.txt");
    std::fs::write(&summary_path, &text)?;
    summary.file(summary_path);

    summary.line(format!(
        "guard rejects {:.0}% of sponges, {:.1}% of held-out naturals (threshold {:.4e})",
        sponge_rate * 100.0,
        natural_rate * 100.0,
        profile.threshold
    ));
    Ok(summary)
}

// --- stats ---------------------------------------------------------------------------

fn stats_task(config: &ExperimentConfig, prov: &Provenance) -> Result<RunSummary> {
    let mut summary = RunSummary::new();
    let pipeline = build_pipeline(config)?;
    let n = config.stats.samples_per_class;
    let ordering = match config.stats.ordering.as_str() {
        "sponge-natural-random" => ExpectedOrdering::SpongeNaturalRandom,
        _ => ExpectedOrdering::SpongeRandomNatural,
    };

    let mut text = prov.header("stats");
    writeln!(text, "alpha = {}", config.stats.alpha).unwrap();
    writeln!(text, "samples_per_class = {n}").unwrap();
    let mut all_significant = true;

    for &length in &config.stats.lengths {
        let mut rng = rng_from_seed(config.seed ^ (0x10 + length as u64));
        let naturals = corpus::natural_sentences(&mut rng, length, n);
        let randoms =
            corpus::random_strings(&mut rng, length, n, pipeline.vocab.alphabet());
        let energies = |texts: &[String]| -> Vec<f64> {
            texts
                .iter()
                .filter_map(|t| pipeline.evaluate(t).ok().map(|r| r.energy_pj()))
                .collect()
        };
        let nat = energies(&naturals);
        let rnd = energies(&randoms);

        let domain = NlpDomain::from_alphabet(pipeline.vocab.alphabet(), length);
        let ga_config = {
            let mut g = config.ga.build(config.seed ^ (0x20 + length as u64));
            g.pool_size = g.pool_size.max(n);
            g
        };
        let outcome = ga_run(
            &ga_config,
            &domain,
            FitnessSource::SimulatedEnergy,
            energy_fitness(&pipeline, FitnessSource::SimulatedEnergy),
        )
        .map_err(|e| anyhow::anyhow!("GA failed: {e}"))?;
        let sponge: Vec<f64> = outcome
            .pool
            .iter()
            .take(n)
            .filter_map(|i| i.fitness.map(|f| f.value))
            .collect();

        let report = compare_sample_classes(&nat, &rnd, &sponge, ordering, config.stats.alpha)
            .map_err(|e| anyhow::anyhow!("comparison failed: {e}"))?;

        writeln!(text, "[length {length}]").unwrap();
        writeln!(
            text,
            "mean_natural_mj = {:?}",
            mean(&nat) * 1e-9
        )
        .unwrap();
        writeln!(text, "mean_random_mj = {:?}", mean(&rnd) * 1e-9).unwrap();
        writeln!(text, "mean_sponge_mj = {:?}", mean(&sponge) * 1e-9).unwrap();
        for pair in &report.pairs {
            writeln!(
                text,
                "u_test {} > {} : U = {}, p = {:e}",
                pair.greater, pair.lesser, pair.result.u_a, pair.result.p_one_sided
            )
            .unwrap();
            if pair.result.p_one_sided >= config.stats.alpha {
                all_significant = false;
            }
        }
        if let Some(n_req) = report.n_required {
            writeln!(text, "n_required = {n_req}").unwrap();
        }

        // Significance-vs-sample-count trace for plotting.
        let x: Vec<f64> = report.significance_trace.iter().map(|p| p.n as f64).collect();
        let series: Vec<(&str, Vec<f64>)> = report
            .pairs
            .iter()
            .enumerate()
            .map(|(i, pair)| {
                let ps: Vec<f64> = report.significance_trace.iter().map(|p| p.p[i]).collect();
                (pair.greater, ps)
            })
            .collect();
        let plot_path = config.out_dir.join(format!("significance_len{length}.tsv"));
        formats::emit_plot_data(&plot_path, "n", &x, &series, prov)?;
        summary.file(plot_path);
    }

    let stats_path = config.out_dir.join("stats.txt");
    std::fs::write(&stats_path, &text)?;
    summary.file(stats_path);
    summary.line(format!(
        "all pairwise orderings significant at alpha {}: {}",
        config.stats.alpha, all_significant
    ));
    Ok(summary)
}

// --- serve ------------------------------------------------------------------------------

fn serve_task(config: &ExperimentConfig) -> Result<RunSummary> {
    let pipeline = build_pipeline(config)?;
    let guard = match &config.service.guard_profile {
        Some(path) => Some(formats::load_profile(path)?),
        None => None,
    };
    let handle = serve(
        pipeline,
        config.service.build(),
        guard,
        config.service.port,
    )?;
    println!("serving translation requests on {}", handle.addr);
    println!("press ctrl-c to stop");
    // Block forever; the service thread owns the socket.
    loop {
        std::thread::sleep(std::time::Duration::from_secs(3600));
    }
}

/// White-box oracle helper used by tests and docs: the exhaustive worst case
/// for short inputs.
pub fn worst_case_energy(
    pipeline: &TextPipeline,
    alphabet: &[char],
    length: usize,
) -> Result<(String, f64)> {
    exhaustive_worst_case(pipeline, alphabet, length)
        .map_err(|e| anyhow::anyhow!("exhaustive search failed: {e}"))
}
