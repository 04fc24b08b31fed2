//! Ablation wiring and the gradient-stop hook.

use std::str::FromStr;

use super::{summarize, Summary};
use crate::data::DataSource;
use crate::model::{init_params, InputMode, ModelConfig};
use crate::streams::{train_sequence, TrainError, TrainOptions, TrainerConfig};

/// Mechanism knockouts for attributing performance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    /// Replace the input projection with one learned constant token;
    /// labels remain the only signal.
    NoImage,
    /// Window size 0: attention contributes nothing, prediction uses the
    /// current features alone.
    NoAttention,
}

impl FromStr for AblationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_image" => Ok(AblationKind::NoImage),
            "no_attention" => Ok(AblationKind::NoAttention),
            other => Err(format!("unknown ablation `{other}` (expected no_image or no_attention)")),
        }
    }
}

/// Rewrite a model config for the requested ablation.
pub fn apply_ablation(config: &mut ModelConfig, kind: AblationKind) {
    match kind {
        AblationKind::NoImage => config.input_mode = InputMode::LearnedConstant,
        AblationKind::NoAttention => config.window = 0,
    }
}

/// Train the ablated model on the source and summarize stream 0.
pub fn run_ablation(
    kind: AblationKind,
    base_config: &ModelConfig,
    trainer: &TrainerConfig,
    source: &dyn DataSource,
    model_seed: u64,
) -> Result<Summary, TrainError> {
    let mut config = base_config.clone();
    apply_ablation(&mut config, kind);
    let mut params = init_params(&config, model_seed);
    let outcome = train_sequence(&config, &mut params, source, trainer, &TrainOptions::default())?;
    Ok(summarize(&outcome.log).expect("completed run emits a complete log"))
}

/// Positions after which parameter updates cease; forward passes, cache
/// updates and metrics continue (in-context conditioning only).
#[derive(Clone, Debug)]
pub struct GradientStopSchedule {
    positions: Vec<usize>,
}

/// Build the hook from a sorted position list. A single run stops at the
/// first listed position; comparisons across several stop points train
/// one run per entry.
pub fn gradient_stop_schedule(positions: Vec<usize>) -> GradientStopSchedule {
    assert!(positions.windows(2).all(|w| w[0] <= w[1]), "stop positions must be sorted");
    GradientStopSchedule { positions }
}

impl GradientStopSchedule {
    pub fn stop_at(&self) -> Option<usize> {
        self.positions.first().copied()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Train options applying this schedule to one run.
    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { gradient_stop_at: self.stop_at(), ..TrainOptions::default() }
    }
}
