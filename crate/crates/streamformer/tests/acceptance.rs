//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).
//!
//! Criterion 5 trains full-size runs and dominates the suite's wall time;
//! its five data seeds execute on worker threads.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use streamformer::data::{
    gaussian_blob_dataset, make_split_sequence, InMemorySource, SequenceSpec,
};
use streamformer::eval::{
    gradient_stop_schedule, macs_forward, mean_task_accuracy, run_ablation, summarize,
    AblationKind, Summary,
};
use streamformer::model::{
    forward_chunk, init_params, kv_cache_floats, BoundParams, Example, InputMode, ModelConfig,
    ModelParams, Variant,
};
use streamformer::numerics::{grad_check, Tape, Tensor, TensorId};
use streamformer::rng::{gaussian, seeded, substream};
use streamformer::streams::{
    maybe_reset, train_sequence, StreamState, TrainOptions, TrainerConfig,
};
use streamformer::testutil::{collect_logits, gaussian_tensor, random_examples, test_rng};

fn report(name: &str, pass: bool) {
    println!("criterion {name}: {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {name} failed");
}

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        width: 6,
        depth: 2,
        num_query_heads: 2,
        key_dim: 2,
        value_dim: 2,
        window: 12,
        num_classes: 3,
        feature_dim: 4,
        input_mode: InputMode::Features,
    }
}

fn randomized_head(params: &mut ModelParams, rng: &mut ChaCha8Rng) {
    for v in params.output_head.data.iter_mut() {
        *v = gaussian(rng) * 0.5;
    }
}

// ── Criterion 1: gradient correctness ───────────────────────────────────

fn op_sweep_error(seed: u64) -> f64 {
    let mut rng = test_rng(seed);
    let x = gaussian_tensor(&mut rng, vec![3, 4]);
    // Width 4 keeps one rotated coordinate pair in play.
    let mut w = gaussian_tensor(&mut rng, vec![4, 4]);
    for v in &mut w.data {
        *v *= 0.45;
    }
    let s = gaussian_tensor(&mut rng, vec![4]);
    let o = gaussian_tensor(&mut rng, vec![4]);
    let row = gaussian_tensor(&mut rng, vec![4]);
    let bits: Vec<bool> = (0..9).map(|i| i % 4 != 1).collect();
    let mask = Rc::new(streamformer::numerics::Mask::new(3, 3, bits));
    let positions = Rc::new(vec![0usize, 3, 5]);

    let f = move |t: &mut Tape, ids: &[TensorId]| {
        let (x, w, s, o, row) = (ids[0], ids[1], ids[2], ids[3], ids[4]);
        let br = t.broadcast_row(row, 3);
        let xb = t.add(x, br);
        let xm = t.mul(xb, x);
        let xs = t.scale(xm, 0.7);
        let ln = t.layer_norm(xs, s, o, 1e-6);
        let up = t.matmul(ln, w);
        let act = t.gelu(up);
        let q = t.rotary(act, &positions);
        let k = t.rotary(act, &positions);
        let scores = t.masked_scores(q, k, &mask, 0.5);
        let probs = t.masked_softmax(scores, &mask);
        let mixed = t.masked_aggregate(probs, act, &mask);
        let top = t.gather_rows(mixed, vec![0, 2, 1, 2]);
        let joined = t.concat_rows(mixed, top);
        let wide = t.concat_cols(&[joined, joined]);
        let nll = t.cross_entropy_rows(wide, vec![0, 2, 7, 1, 3, 5, 6]);
        let loss = t.mean(nll);
        let s_wide = t.sum(wide);
        let s_ln = t.sum(ln);
        let s_act = t.sum(act);
        let a1 = t.scale(s_wide, 0.11);
        let a2 = t.scale(s_ln, 0.07);
        let a3 = t.scale(s_act, 0.05);
        let anchored = t.add(loss, a1);
        let anchored = t.add(anchored, a2);
        let total = t.add(anchored, a3);
        t.scale(total, 0.2)
    };
    grad_check(&f, &[x, w, s, o, row])
}

/// Full-model chunk loss gradient error against central differences, with
/// a warm cache so cached rows participate as constants.
fn full_model_error(variant: Variant, seed: u64) -> f64 {
    let config = small_config(variant);
    let mut rng = test_rng(seed ^ 0x51ED);
    let mut params = init_params(&config, seed);
    randomized_head(&mut params, &mut rng);
    let warmup = random_examples(&mut rng, &config, 3);
    let chunk = random_examples(&mut rng, &config, 4);
    let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();

    let mut caches = config.new_caches();
    {
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &params);
        forward_chunk(&mut tape, &bound, &config, &warmup, &mut caches).unwrap();
    }

    // Flatten parameters; the closure rebuilds a ModelParams around them.
    let mut flat: Vec<Tensor> = Vec::new();
    params.visit(|_, t| flat.push(t.clone()));
    let template = params;
    let config2 = config.clone();
    let caches2 = caches;
    let f = move |t: &mut Tape, ids: &[TensorId]| {
        // The displaced parameter values already live on the tape as
        // tracked leaves; wire them into the forward in declaration order.
        let bound = bind_from_ids(&template, ids);
        let mut caches = caches2.clone();
        let fwd = forward_chunk(t, &bound, &config2, &chunk, &mut caches).unwrap();
        let nll = t.cross_entropy_rows(fwd.logits, labels.clone());
        let loss = t.mean(nll);
        // A small loss keeps central-difference rounding noise below the
        // comparison floor at every gradient magnitude.
        t.scale(loss, 0.05)
    };
    grad_check(&f, &flat)
}

/// Assemble BoundParams over leaves that already live on the tape, in
/// the declaration order `ModelParams::visit` uses.
fn bind_from_ids(params: &ModelParams, ids: &[TensorId]) -> BoundParams {
    let mut cursor = 0usize;
    let mut next = || {
        let id = ids[cursor];
        cursor += 1;
        id
    };
    let input_proj = next();
    let label_embed = params.label_embed.as_ref().map(|_| next());
    let const_token = params.const_token.as_ref().map(|_| next());
    let blocks = params
        .blocks
        .iter()
        .map(|b| streamformer::model::BoundBlock {
            ln_scale: next(),
            ln_offset: next(),
            w_up: next(),
            w_down: next(),
            w_queries: b.w_queries.iter().map(|_| next()).collect(),
            w_key: next(),
            w_value: next(),
            w_key_label: b.w_key_label.as_ref().map(|_| next()),
            w_value_label: b.w_value_label.as_ref().map(|_| next()),
            w_out: next(),
        })
        .collect();
    let final_ln_scale = next();
    let final_ln_offset = next();
    let output_head = next();
    assert_eq!(cursor, ids.len());
    BoundParams::from_parts(
        input_proj,
        label_embed,
        const_token,
        blocks,
        final_ln_scale,
        final_ln_offset,
        output_head,
        ids.to_vec(),
    )
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = std::time::Instant::now();
    let mut worst_ops = 0.0f64;
    for seed in 0..10 {
        worst_ops = worst_ops.max(op_sweep_error(seed));
    }
    let mut worst_model = 0.0f64;
    for seed in 0..10 {
        for variant in [Variant::Pi, Variant::TwoToken] {
            worst_model = worst_model.max(full_model_error(variant, seed));
        }
    }
    println!(
        "criterion 1 detail: op-sweep max rel err {worst_ops:.3e}, full-model max rel err {worst_model:.3e}, {:.1}s",
        started.elapsed().as_secs_f64()
    );
    report(
        "1 (gradient correctness)",
        worst_ops < 1e-4 && worst_model < 1e-4 && started.elapsed().as_secs() < 60,
    );
}

// ── Criterion 2: causality suite ────────────────────────────────────────

#[test]
fn criterion_2_causality() {
    let started = std::time::Instant::now();
    let mut pass = true;

    // Privileged variant: zero diagonal means a label change is invisible
    // at its own position and all earlier ones.
    {
        let config = small_config(Variant::Pi);
        let mut params = init_params(&config, 3);
        randomized_head(&mut params, &mut test_rng(100));
        let mut rng = test_rng(101);
        let examples = random_examples(&mut rng, &config, 32);
        let base = collect_logits(&config, &params, &examples, 8);
        for t in [0usize, 5, 16, 31] {
            let mut perturbed = examples.clone();
            perturbed[t].label = (perturbed[t].label + 1) % config.num_classes;
            let got = collect_logits(&config, &params, &perturbed, 8);
            for i in 0..=t {
                pass &= base[i] == got[i];
            }
            if t + 1 < 32 {
                pass &= base[t + 1] != got[t + 1];
            }
        }
        // Features are visible at their own position but never earlier.
        for t in [0usize, 9, 24] {
            let mut perturbed = examples.clone();
            perturbed[t].features[2] += 2.0;
            let got = collect_logits(&config, &params, &perturbed, 8);
            for i in 0..t {
                pass &= base[i] == got[i];
            }
            pass &= base[t] != got[t];
        }
    }

    // Two-token variant: a label token change is invisible at feature
    // positions up to and including its own example.
    {
        let config = small_config(Variant::TwoToken);
        let mut params = init_params(&config, 4);
        randomized_head(&mut params, &mut test_rng(102));
        let mut rng = test_rng(103);
        let examples = random_examples(&mut rng, &config, 32);
        let base = collect_logits(&config, &params, &examples, 8);
        for t in [0usize, 7, 31] {
            let mut perturbed = examples.clone();
            perturbed[t].label = (perturbed[t].label + 1) % config.num_classes;
            let got = collect_logits(&config, &params, &perturbed, 8);
            for i in 0..=t {
                pass &= base[i] == got[i];
            }
        }
    }

    // Sliding window at depth 1, where the per-block bound is the whole
    // story: examples older than `window` tokens cannot move any logit.
    for variant in [Variant::Pi, Variant::TwoToken] {
        let mut config = small_config(variant);
        config.depth = 1;
        config.window = 8;
        let mut params = init_params(&config, 5);
        randomized_head(&mut params, &mut test_rng(104));
        let mut rng = test_rng(105);
        let examples = random_examples(&mut rng, &config, 32);
        let base = collect_logits(&config, &params, &examples, 8);
        let modified = 2usize;
        let mut perturbed = examples.clone();
        perturbed[modified].features[0] -= 1.5;
        perturbed[modified].label = (perturbed[modified].label + 1) % config.num_classes;
        let got = collect_logits(&config, &params, &perturbed, 8);
        let tokens_per = variant.tokens_per_example();
        let last_modified_token = modified * tokens_per + tokens_per - 1;
        for i in 0..32 {
            if i * tokens_per > last_modified_token + config.window {
                pass &= base[i] == got[i];
            }
        }
    }

    report("2 (causality suite)", pass && started.elapsed().as_secs() < 60);
}

// ── Criterion 3: chunking equivalence ───────────────────────────────────

#[test]
fn criterion_3_chunking_equivalence() {
    let started = std::time::Instant::now();
    let mut worst = 0.0f64;
    for variant in [Variant::Pi, Variant::TwoToken] {
        let mut config = small_config(variant);
        config.window = 128;
        let mut params = init_params(&config, 7);
        randomized_head(&mut params, &mut test_rng(200));
        let mut rng = test_rng(201);
        let examples = random_examples(&mut rng, &config, 64);
        let chunked = collect_logits(&config, &params, &examples, 8);
        let whole = collect_logits(&config, &params, &examples, 64);
        for (c, w) in chunked.iter().zip(&whole) {
            for (a, b) in c.iter().zip(w) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    println!("criterion 3 detail: max |chunked - monolithic| = {worst:.3e}");
    report("3 (chunking equivalence)", worst < 1e-5 && started.elapsed().as_secs() < 60);
}

// ── Criterion 4: replay uniformity ──────────────────────────────────────

#[test]
fn criterion_4_replay_uniformity() {
    let started = std::time::Instant::now();
    let total = 2000usize;
    let chunk = 10usize;
    let turns = total / chunk; // 200
    let trials = 20_000usize;

    // Model-free simulation of the per-turn reset schedule for a single
    // replay stream, sampling the chunk it replays at the final turn.
    let source = InMemorySource::from_examples(vec![Example::new(vec![0.0], 0); 1], 1, 1);
    let dummy_model = small_config(Variant::Pi);
    let mut samples = vec![0usize; trials];
    for (trial, slot) in samples.iter_mut().enumerate() {
        let mut stream = StreamState::new(&source, &dummy_model, substream(7777, trial as u64));
        let mut replay_chunk = 0usize;
        for turn in 0..turns {
            let lead = turn * chunk;
            if lead >= chunk && maybe_reset(&mut stream, lead, chunk) {
                replay_chunk = 0;
            }
            if turn == turns - 1 {
                *slot = replay_chunk;
            }
            replay_chunk += 1;
        }
    }

    // The replayable past at the final turn is chunks 0..=198. Compare
    // against uniform over it on 10 equal bins (20k samples give the
    // binned estimate ~1% sampling noise; raw 199-atom comparison would
    // drown the 2% budget in noise).
    let reachable = turns - 1; // 199 chunks
    let bins = 10usize;
    let mut counts = vec![0usize; bins];
    for &s in &samples {
        assert!(s < reachable, "replayed chunk {s} out of reachable range");
        counts[s * bins / reachable] += 1;
    }
    let mut tv = 0.0;
    for (b, &c) in counts.iter().enumerate() {
        let chunk_count = (0..reachable).filter(|&i| i * bins / reachable == b).count();
        let expected = chunk_count as f64 / reachable as f64;
        let observed = c as f64 / trials as f64;
        tv += (observed - expected).abs();
    }
    tv /= 2.0;
    println!("criterion 4 detail: binned total-variation distance {tv:.4}");
    report("4 (replay uniformity)", tv < 0.02 && started.elapsed().as_secs() < 60);
}

// ── Criterion 5: few-shot emergence at desk scale ───────────────────────

fn emergence_config() -> ModelConfig {
    ModelConfig {
        variant: Variant::Pi,
        width: 64,
        depth: 2,
        num_query_heads: 2,
        key_dim: 32,
        value_dim: 32,
        window: 512,
        num_classes: 10,
        feature_dim: 32,
        input_mode: InputMode::Features,
    }
}

fn emergence_trainer(num_streams: usize, data_seed: u64) -> TrainerConfig {
    let _ = data_seed;
    TrainerConfig {
        num_streams,
        chunk_size: 50,
        alpha0: 3e-2,
        learning_rate: None, // alpha0 / width
        weight_decay: 0.0,
        seed: 0,
        total_examples: 50_000,
    }
}

fn emergence_run(num_streams: usize, data_seed: u64) -> Summary {
    let base = gaussian_blob_dataset(47, 32, 0.3, 0);
    let spec = SequenceSpec { num_tasks: 100, examples_per_task: 500, ways: 10, seed: data_seed };
    let source = make_split_sequence(base, spec).unwrap();
    let config = emergence_config();
    let mut params = init_params(&config, 0);
    let outcome = train_sequence(
        &config,
        &mut params,
        &source,
        &emergence_trainer(num_streams, data_seed),
        &TrainOptions::default(),
    )
    .unwrap();
    summarize(&outcome.log).unwrap()
}

#[test]
fn criterion_5_few_shot_emergence() {
    let started = std::time::Instant::now();
    let seeds: Vec<u64> = (0..5).collect();
    let results: Vec<(u64, Summary, Summary)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let replay = emergence_run(8, seed);
                    let online = emergence_run(1, seed);
                    (seed, replay, online)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut gap_votes = 0usize;
    let mut replay_votes = 0usize;
    for (seed, replay, online) in &results {
        let early = mean_task_accuracy(replay, 0, 19);
        let late = mean_task_accuracy(replay, 80, 99);
        let gap = late - early;
        let gap_ok = gap >= 0.20;
        let replay_ok = replay.average_accuracy > online.average_accuracy;
        gap_votes += usize::from(gap_ok);
        replay_votes += usize::from(replay_ok);
        println!(
            "criterion 5 detail: seed {seed}: early {early:.3}, late {late:.3}, gap {gap:.3} ({}), E=8 acc {:.3} vs E=1 acc {:.3} ({})",
            if gap_ok { "ok" } else { "miss" },
            replay.average_accuracy,
            online.average_accuracy,
            if replay_ok { "ok" } else { "miss" },
        );
    }
    println!(
        "criterion 5 detail: {gap_votes}/5 gap votes, {replay_votes}/5 replay votes, {:.0}s",
        started.elapsed().as_secs_f64()
    );
    report("5 (few-shot emergence, majority over 5 data seeds)", gap_votes >= 3 && replay_votes >= 3);
}

// ── Criterion 6: initial-loss exactness ─────────────────────────────────

#[test]
fn criterion_6_initial_loss_exactness() {
    let mut pass = true;
    for variant in [Variant::Pi, Variant::TwoToken] {
        let mut config = small_config(variant);
        config.num_classes = 10;
        let base = gaussian_blob_dataset(12, config.feature_dim, 0.25, 3);
        let spec = SequenceSpec { num_tasks: 2, examples_per_task: 40, ways: 10, seed: 1 };
        let source = make_split_sequence(base, spec).unwrap();
        let trainer = TrainerConfig {
            num_streams: 2,
            chunk_size: 20,
            alpha0: 3e-2,
            learning_rate: None,
            weight_decay: 0.0,
            seed: 2,
            total_examples: 80,
        };
        let mut params = init_params(&config, 11);
        let outcome =
            train_sequence(&config, &mut params, &source, &trainer, &TrainOptions::default()).unwrap();
        let ln_k = (10f64).ln();
        for r in &outcome.log.records[..20] {
            pass &= (r.nll - ln_k).abs() < 1e-6;
        }
    }
    report("6 (initial loss = ln K)", pass);
}

// ── Criterion 7: MAC accounting ─────────────────────────────────────────

#[test]
fn criterion_7_mac_accounting() {
    let mut pass = true;
    for seed in 0..5u64 {
        let mut rng = seeded(900 + seed);
        let variant = if rng.random::<f64>() < 0.5 { Variant::Pi } else { Variant::TwoToken };
        let config = ModelConfig {
            variant,
            width: 4 + rng.random_range(0..8),
            depth: 1 + rng.random_range(0..3),
            num_query_heads: 1 + rng.random_range(0..3),
            key_dim: 2 + rng.random_range(0..4),
            value_dim: 2 + rng.random_range(0..4),
            window: rng.random_range(0..12),
            num_classes: 2 + rng.random_range(0..5),
            feature_dim: 3 + rng.random_range(0..5),
            input_mode: if rng.random::<f64>() < 0.25 {
                InputMode::LearnedConstant
            } else {
                InputMode::Features
            },
        };
        let params = init_params(&config, seed);
        let mut caches = config.new_caches();
        let mut instrumented = 0u64;
        let mut tokens = 0usize;
        for _ in 0..3 {
            let n = 1 + rng.random_range(0..5);
            let examples = random_examples(&mut rng, &config, n);
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, &params);
            forward_chunk(&mut tape, &bound, &config, &examples, &mut caches).unwrap();
            instrumented += tape.forward_macs();
            tokens += n * variant.tokens_per_example();
        }
        let analytic = macs_forward(&config, tokens);
        if analytic != instrumented {
            println!("criterion 7 detail: seed {seed} {config:?}: analytic {analytic} != instrumented {instrumented}");
            pass = false;
        }
    }
    report("7 (analytic MACs match instrumented counter exactly)", pass);
}

// ── Criterion 8: KV memory accounting ───────────────────────────────────

#[test]
fn criterion_8_kv_memory() {
    report("8 (kv_cache_floats(8,128,1024) = 1,048,576)", kv_cache_floats(8, 128, 1024) == 1_048_576);
}

// ── Criterion 9: desk-scale stand-ins ───────────────────────────────────
//
// Large-scale web-image benchmark accuracies are out of reach at desk
// scale (no image corpus, no feature extractor in this artifact); the
// qualitative stand-ins below plus criteria 1-7 take their place.

fn standin_model(num_classes: usize, feature_dim: usize) -> ModelConfig {
    ModelConfig {
        variant: Variant::Pi,
        width: 32,
        depth: 1,
        num_query_heads: 2,
        key_dim: 16,
        value_dim: 16,
        window: 128,
        num_classes,
        feature_dim,
        input_mode: InputMode::Features,
    }
}

fn standin_trainer(num_streams: usize, total: usize, chunk: usize) -> TrainerConfig {
    TrainerConfig {
        num_streams,
        chunk_size: chunk,
        alpha0: 3e-2,
        learning_rate: None,
        weight_decay: 0.0,
        seed: 31,
        total_examples: total,
    }
}

#[test]
fn criterion_9a_label_only_learns_constant_stream() {
    // Labels repeat forever; a label-only model must learn to copy them.
    let examples: Vec<Example> = (0..1000).map(|_| Example::new(vec![0.0; 8], 3)).collect();
    let source = InMemorySource::from_examples(examples, 10, 8);
    let config = standin_model(10, 8);
    let summary = run_ablation(AblationKind::NoImage, &config, &standin_trainer(1, 1000, 10), &source, 5)
        .unwrap();
    // Per-task grouping is trivial here (one task); score the last 200
    // positions directly.
    let last200 = 1.0
        - summary.within_task.iter().skip(800).map(|p| 1.0 - p.mean_accuracy).sum::<f64>()
            / 200.0;
    println!("criterion 9a detail: label-only accuracy over last 200 = {last200:.3}");
    report("9a (label-only model fits a constant stream)", last200 >= 0.95);
}

#[test]
fn criterion_9b_label_only_at_chance_on_uniform_labels() {
    let mut rng = seeded(41);
    let k = 10usize;
    let total = 2000usize;
    let examples: Vec<Example> = (0..total)
        .map(|_| Example::new(vec![gaussian(&mut rng)], rng.random_range(0..k)))
        .collect();
    let source = InMemorySource::from_examples(examples, k, 1);
    let config = standin_model(k, 1);
    let summary = run_ablation(AblationKind::NoImage, &config, &standin_trainer(1, total, 10), &source, 6)
        .unwrap();
    let sigma = (0.1f64 * 0.9 / total as f64).sqrt();
    let dev = (summary.average_accuracy - 1.0 / k as f64).abs();
    println!(
        "criterion 9b detail: label-only accuracy {:.4} vs chance 0.1 (3 sigma = {:.4})",
        summary.average_accuracy,
        3.0 * sigma
    );
    report("9b (label-only model at chance on uniform labels)", dev <= 3.0 * sigma);
}

#[test]
fn criterion_9c_no_attention_initial_chunk_uniform() {
    let mut rng = seeded(43);
    let k = 7usize;
    let examples: Vec<Example> = (0..60)
        .map(|_| Example::new(vec![gaussian(&mut rng), gaussian(&mut rng)], rng.random_range(0..k)))
        .collect();
    let source = InMemorySource::from_examples(examples, k, 2);
    let mut config = standin_model(k, 2);
    config.width = 16;
    config.key_dim = 8;
    config.value_dim = 8;
    let summary =
        run_ablation(AblationKind::NoAttention, &config, &standin_trainer(2, 60, 20), &source, 7).unwrap();
    // With a zero output head every first-chunk loss is exactly ln K even
    // without attention.
    let ln_k = (k as f64).ln();
    let first_chunk_mean: f64 =
        summary.within_task.iter().take(20).map(|p| p.mean_nll).sum::<f64>() / 20.0;
    report("9c (no-attention first chunk at ln K)", (first_chunk_mean - ln_k).abs() < 1e-9);
}

#[test]
fn criterion_9d_gradient_stop_ordering() {
    let started = std::time::Instant::now();
    let base = gaussian_blob_dataset(47, 16, 0.3, 9);
    let spec = SequenceSpec { num_tasks: 30, examples_per_task: 200, ways: 10, seed: 17 };
    let source = make_split_sequence(base, spec).unwrap();
    let config = ModelConfig {
        variant: Variant::Pi,
        width: 32,
        depth: 1,
        num_query_heads: 2,
        key_dim: 16,
        value_dim: 16,
        window: 128,
        num_classes: 10,
        feature_dim: 16,
        input_mode: InputMode::Features,
    };
    let trainer = TrainerConfig {
        num_streams: 4,
        chunk_size: 25,
        alpha0: 3e-2,
        learning_rate: None,
        weight_decay: 0.0,
        seed: 3,
        total_examples: 6000,
    };
    let run_with_stop = |stop: Option<usize>| -> f64 {
        let mut params = init_params(&config, 21);
        let options = match stop {
            Some(p) => gradient_stop_schedule(vec![p]).train_options(),
            None => TrainOptions::default(),
        };
        let outcome = train_sequence(&config, &mut params, &source, &trainer, &options).unwrap();
        summarize(&outcome.log).unwrap().average_accuracy
    };
    let frozen = run_with_stop(Some(0));
    let half = run_with_stop(Some(3000));
    let full = run_with_stop(None);
    println!(
        "criterion 9d detail: stop@0 {frozen:.3}, stop@50% {half:.3}, never {full:.3} ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
    report(
        "9d (gradient-stop accuracy ordering)",
        frozen <= half && half <= full && frozen < full,
    );
}
