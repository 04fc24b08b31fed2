//! Replay-streams online training.
//!
//! One reporting stream walks the sequence once, front to back, and its
//! per-example next-step metrics are the run's result. The remaining
//! `E - 1` replay streams walk the same sequence through their own
//! readers and KV-caches, each stochastically reset to position 0 so
//! that, in expectation, earlier data is revisited uniformly. Every
//! stream applies ordinary gradient steps to the one shared parameter
//! set; only stream 0 is scored.

use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{AnnotatedExample, DataReader, DataSource};
use crate::eval::{MetricRecord, MetricsLog};
use crate::model::{
    forward_chunk, save_checkpoint, BoundParams, KVCache, ModelConfig, ModelError, ModelParams,
};
use crate::numerics::{adamw_step, AdamWState, Tape};
use crate::rng::substream;

/// Training hyperparameters.
#[derive(Clone, Debug)]
pub struct TrainerConfig {
    /// Stream count E (1 = no replay).
    pub num_streams: usize,
    /// Examples per forward/backward chunk (S).
    pub chunk_size: usize,
    /// Width-free learning-rate numerator.
    pub alpha0: f64,
    /// Explicit learning rate; when unset, `alpha0 / width` applies.
    pub learning_rate: Option<f64>,
    pub weight_decay: f64,
    pub seed: u64,
    /// Examples stream 0 consumes (T).
    pub total_examples: usize,
}

impl TrainerConfig {
    pub fn effective_learning_rate(&self, width: usize) -> f64 {
        self.learning_rate.unwrap_or(self.alpha0 / width as f64)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.num_streams < 1 {
            return Err(TrainError::InvalidConfig("num_streams must be >= 1".into()));
        }
        if self.chunk_size < 1 {
            return Err(TrainError::InvalidConfig("chunk_size must be >= 1".into()));
        }
        if self.total_examples < 1 {
            return Err(TrainError::InvalidConfig("total_examples must be >= 1".into()));
        }
        Ok(())
    }
}

/// One stream: a reader position, a per-block cache set and a private
/// reset generator.
pub struct StreamState {
    pub reader: Box<dyn DataReader + Send>,
    pub caches: Vec<KVCache>,
    pub rng: ChaCha8Rng,
}

impl StreamState {
    pub fn new(source: &dyn DataSource, config: &ModelConfig, rng: ChaCha8Rng) -> Self {
        StreamState { reader: source.reader(), caches: config.new_caches(), rng }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss on stream {stream} at position {position}")]
    NonFiniteLoss { stream: usize, position: usize },
    #[error("non-finite gradient on stream {stream} at position {position}: {detail}")]
    NonFiniteGradient { stream: usize, position: usize, detail: String },
    #[error("data source exhausted at position {position}, {needed} more examples required")]
    DataExhausted { position: usize, needed: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::model::CheckpointError),
}

/// Result of one chunk's predict-then-train step.
pub struct ChunkOutcome {
    pub mean_nll: f64,
    pub records: Vec<MetricRecord>,
    pub forward_macs: u64,
}

/// Forward a chunk, score it, and (unless updates are disabled) take one
/// AdamW step on the mean loss. Caches advance by the chunk's tokens
/// either way.
///
/// Within the chunk the causal mask guarantees each prediction conditions
/// only on strictly earlier targets, so recording metrics from the same
/// forward pass that trains is sound.
pub fn gradient_step(
    model_config: &ModelConfig,
    params: &mut ModelParams,
    opt: &mut AdamWState,
    stream: &mut StreamState,
    stream_index: usize,
    chunk: &[AnnotatedExample],
    update_params: bool,
) -> Result<ChunkOutcome, TrainError> {
    assert!(!chunk.is_empty(), "gradient_step: empty chunk");
    let first_position = stream.reader.position() - chunk.len();

    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params);
    let examples: Vec<crate::model::Example> = chunk.iter().map(|a| a.example.clone()).collect();
    let fwd = forward_chunk(&mut tape, &bound, model_config, &examples, &mut stream.caches)?;
    let nll_rows = tape.cross_entropy_rows(fwd.logits, fwd.labels.clone());
    let loss = tape.mean(nll_rows);
    let mean_nll = tape.value(loss)[0];
    if !mean_nll.is_finite() {
        return Err(TrainError::NonFiniteLoss { stream: stream_index, position: first_position });
    }

    let k = model_config.num_classes;
    let logits = tape.value(fwd.logits);
    let nlls = tape.value(nll_rows);
    let records: Vec<MetricRecord> = chunk
        .iter()
        .enumerate()
        .map(|(i, item)| MetricRecord {
            position: first_position + i,
            nll: nlls[i],
            correct: argmax(&logits[i * k..(i + 1) * k]) == item.example.label,
            task_id: item.task_id,
            within_task_pos: item.within_task_pos,
        })
        .collect();

    let forward_macs = tape.forward_macs();
    if update_params {
        tape.backward(loss);
        let grads = bound.collect_grads(&tape);
        let grad_views: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
        let mut tensors = params.tensors_mut();
        adamw_step(&mut tensors, &grad_views, opt).map_err(|e| TrainError::NonFiniteGradient {
            stream: stream_index,
            position: first_position,
            detail: e.to_string(),
        })?;
    }

    Ok(ChunkOutcome { mean_nll, records, forward_macs })
}

/// Lowest-index argmax.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Stochastic replay reset: with probability `min(1, S/t)` rewind the
/// stream's reader to position 0 and empty its caches. `t` is stream 0's
/// example position at the start of the turn; callers skip the call while
/// `t < S`.
pub fn maybe_reset(stream: &mut StreamState, lead_position: usize, chunk_size: usize) -> bool {
    use rand::Rng;
    assert!(lead_position >= chunk_size, "maybe_reset requires lead position >= chunk size");
    let p = (chunk_size as f64 / lead_position as f64).min(1.0);
    if stream.rng.random::<f64>() < p {
        stream.reader.reset();
        for cache in &mut stream.caches {
            cache.clear();
        }
        true
    } else {
        false
    }
}

/// Run-level options orthogonal to the trainer hyperparameters.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Stop parameter updates once stream 0 reaches this position
    /// (forward passes, cache updates and metrics continue).
    pub gradient_stop_at: Option<usize>,
    /// Save a checkpoint every this many stream-0 examples.
    pub checkpoint_every: Option<usize>,
    /// Directory for interval checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

/// A finished run: the prequential log plus training counters.
#[derive(Debug)]
pub struct TrainOutcome {
    pub log: MetricsLog,
    pub gradient_steps: u64,
}

fn read_chunk(
    reader: &mut Box<dyn DataReader + Send>,
    n: usize,
) -> Result<Vec<AnnotatedExample>, TrainError> {
    let mut chunk = Vec::with_capacity(n);
    for i in 0..n {
        match reader.next_example() {
            Some(item) => chunk.push(item),
            None => {
                return Err(TrainError::DataExhausted { position: reader.position(), needed: n - i })
            }
        }
    }
    Ok(chunk)
}

/// Train over the sequence per the replay-streams schedule and return
/// stream 0's complete metrics log.
///
/// Each turn advances stream 0 by one chunk (recording metrics), then
/// every replay stream in index order (metrics discarded). Replay resets
/// are decided once per stream per turn, before that stream's step, using
/// stream 0's position at the start of the turn.
pub fn train_sequence(
    model_config: &ModelConfig,
    params: &mut ModelParams,
    source: &dyn DataSource,
    trainer: &TrainerConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    trainer.validate()?;
    model_config.validate()?;
    let total = trainer.total_examples;
    let chunk_size = trainer.chunk_size;

    let mut opt = AdamWState::new(
        trainer.effective_learning_rate(model_config.width),
        trainer.weight_decay,
    );
    let mut streams: Vec<StreamState> = (0..trainer.num_streams)
        .map(|s| StreamState::new(source, model_config, substream(trainer.seed, s as u64)))
        .collect();

    let mut records = Vec::with_capacity(total);
    let mut macs_total: u64 = 0;
    let mut gradient_steps: u64 = 0;
    let mut lead = 0usize;

    while lead < total {
        let turn_start = lead;
        let n0 = chunk_size.min(total - lead);
        let update = options.gradient_stop_at.is_none_or(|stop| lead < stop);

        let chunk = read_chunk(&mut streams[0].reader, n0)?;
        let outcome = gradient_step(model_config, params, &mut opt, &mut streams[0], 0, &chunk, update)?;
        records.extend(outcome.records);
        macs_total += outcome.forward_macs * if update { 3 } else { 1 };
        gradient_steps += u64::from(update);
        lead += n0;

        for (s, stream) in streams.iter_mut().enumerate().skip(1) {
            if turn_start >= chunk_size {
                maybe_reset(stream, turn_start, chunk_size);
            }
            let position = stream.reader.position();
            debug_assert!(position <= lead, "replay stream {s} ran ahead of stream 0");
            let n_s = chunk_size.min(lead - position);
            if n_s == 0 {
                continue;
            }
            let chunk = read_chunk(&mut stream.reader, n_s)?;
            let replay = gradient_step(model_config, params, &mut opt, stream, s, &chunk, update)?;
            macs_total += replay.forward_macs * if update { 3 } else { 1 };
            gradient_steps += u64::from(update);
        }

        if let (Some(every), Some(dir)) = (options.checkpoint_every, options.checkpoint_dir.as_ref()) {
            if lead / every > turn_start / every || lead == total {
                std::fs::create_dir_all(dir).map_err(crate::model::CheckpointError::Io)?;
                save_checkpoint(model_config, params, &dir.join(format!("ckpt_{lead}.ckpt")))?;
            }
        }
    }

    Ok(TrainOutcome { log: MetricsLog { records, macs_total }, gradient_steps })
}
