//! Run orchestration: configs in, metric and curve files out.

mod config;

pub use config::{
    parse_experiment_config, parse_experiment_text, parse_grid, parse_grid_text, DataSettings,
    ExperimentConfig, GridSpec, ModelSettings, RunSettings, TrainerSettings,
};

use std::path::Path;

use thiserror::Error;

use crate::data::{
    gaussian_blob_dataset, load_feature_file, make_split_sequence, DataSource, SequenceSpec,
};
use crate::eval::{
    aggregate_curves, apply_ablation, running_accuracy, summarize, window_oracle, write_curve_csv,
    write_log_csv, MetricsLog, Summary,
};
use crate::model::{init_params, InputMode, ModelConfig};
use crate::streams::{train_sequence, TrainError, TrainOptions, TrainerConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{field}: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("run aborted: {0}")]
    Runtime(TrainError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Csv(#[from] crate::eval::CsvError),
}

impl CliError {
    /// Process exit code: 2 for config errors, 3 for runtime aborts,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig { .. } => 2,
            CliError::Runtime(
                TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. },
            ) => 3,
            _ => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Runtime(e)
    }
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

impl ExperimentConfig {
    /// Instantiate the data source for one data seed.
    pub fn build_source(&self, data_seed: u64) -> Result<Box<dyn DataSource>, CliError> {
        match &self.data {
            DataSettings::SplitBlobs { classes, feature_dim, spread, base_seed, tasks, task_len, ways } => {
                let base = gaussian_blob_dataset(*classes, *feature_dim, *spread, *base_seed);
                let spec = SequenceSpec {
                    num_tasks: *tasks,
                    examples_per_task: *task_len,
                    ways: *ways,
                    seed: data_seed,
                };
                Ok(Box::new(make_split_sequence(base, spec)?))
            }
            DataSettings::FeatureFile { path } => Ok(Box::new(load_feature_file(path)?)),
        }
    }

    /// Model config for a source's class count and feature width, with the
    /// configured ablation applied.
    pub fn model_config(&self, num_classes: usize, feature_dim: usize) -> ModelConfig {
        let mut config = ModelConfig {
            variant: self.model.variant,
            width: self.model.width,
            depth: self.model.depth,
            num_query_heads: self.model.heads,
            key_dim: self.model.key_dim,
            value_dim: self.model.value_dim,
            window: self.model.window,
            num_classes,
            feature_dim,
            input_mode: InputMode::Features,
        };
        if let Some(kind) = self.run.ablation {
            apply_ablation(&mut config, kind);
        }
        config
    }

    /// Trainer config for a source length. Reset randomness derives from
    /// the model seed so data seeds vary only the sequence.
    pub fn trainer_config(&self, source_len: usize) -> Result<TrainerConfig, CliError> {
        let total = self.trainer.examples.unwrap_or(source_len);
        if total > source_len {
            return Err(CliError::InvalidConfig {
                field: "trainer.examples".into(),
                reason: format!("{total} requested but the source holds {source_len}"),
            });
        }
        Ok(TrainerConfig {
            num_streams: self.trainer.streams,
            chunk_size: self.trainer.chunk_size,
            alpha0: self.trainer.alpha0,
            learning_rate: self.trainer.learning_rate,
            weight_decay: self.trainer.weight_decay,
            seed: self.run.model_seed,
            total_examples: total,
        })
    }
}

/// One data seed's artifacts.
pub struct SeedResult {
    pub data_seed: u64,
    pub log: MetricsLog,
    pub summary: Summary,
}

/// Train one run per data seed and return the per-seed results.
pub fn execute_runs(config: &ExperimentConfig) -> Result<Vec<SeedResult>, CliError> {
    let mut results = Vec::new();
    for &data_seed in &config.run.data_seeds {
        let source = config.build_source(data_seed)?;
        let model_config = config.model_config(source.num_classes(), source.feature_dim());
        let trainer = config.trainer_config(source.len())?;
        let mut params = init_params(&model_config, config.run.model_seed);
        let options = TrainOptions {
            gradient_stop_at: config.run.gradient_stop,
            checkpoint_every: config.run.checkpoint_every,
            checkpoint_dir: config
                .run
                .checkpoint_every
                .map(|_| config.run.output_dir.join(format!("checkpoints_seed{data_seed}"))),
        };
        let outcome = train_sequence(&model_config, &mut params, source.as_ref(), &trainer, &options)?;
        let summary = summarize(&outcome.log).expect("completed run emits a complete log");
        results.push(SeedResult { data_seed, log: outcome.log, summary });
    }
    Ok(results)
}

fn write_aggregated_curves(results: &[SeedResult], dir: &Path) -> Result<(), CliError> {
    let acc_curves: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.summary.within_task.iter().map(|p| p.mean_accuracy).collect())
        .collect();
    let nll_curves: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.summary.within_task.iter().map(|p| p.mean_nll).collect())
        .collect();
    let xs: Vec<f64> = results[0].summary.within_task.iter().map(|p| p.within_task_pos as f64).collect();
    let pack = |xs: &[f64], stats: Vec<(f64, f64)>| -> Vec<(f64, f64, f64)> {
        xs.iter().zip(stats).map(|(&x, (m, s))| (x, m, s)).collect()
    };
    write_curve_csv(&dir.join("within_task_accuracy.csv"), &pack(&xs, aggregate_curves(&acc_curves)))?;
    write_curve_csv(&dir.join("within_task_nll.csv"), &pack(&xs, aggregate_curves(&nll_curves)))?;

    let task_acc: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.summary.per_task.iter().map(|p| p.mean_accuracy).collect())
        .collect();
    let task_nll: Vec<Vec<f64>> = results
        .iter()
        .map(|r| r.summary.per_task.iter().map(|p| p.mean_nll).collect())
        .collect();
    let task_xs: Vec<f64> = results[0].summary.per_task.iter().map(|p| p.task_id as f64).collect();
    write_curve_csv(&dir.join("per_task_accuracy.csv"), &pack(&task_xs, aggregate_curves(&task_acc)))?;
    write_curve_csv(&dir.join("per_task_nll.csv"), &pack(&task_xs, aggregate_curves(&task_nll)))?;

    let running: Vec<Vec<f64>> = results.iter().map(|r| running_accuracy(&r.log)).collect();
    let run_xs: Vec<f64> = (0..running[0].len()).map(|i| i as f64).collect();
    write_curve_csv(&dir.join("running_accuracy.csv"), &pack(&run_xs, aggregate_curves(&running)))?;
    Ok(())
}

fn write_summary_text(results: &[SeedResult], path: &Path) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(&format!("runs = {}\n", results.len()));
    for r in results {
        for line in r.summary.to_text().lines() {
            text.push_str(&format!("seed_{}.{line}\n", r.data_seed));
        }
    }
    let n = results.len() as f64;
    let mean_acc: f64 = results.iter().map(|r| r.summary.average_accuracy).sum::<f64>() / n;
    let mean_nll: f64 = results.iter().map(|r| r.summary.cumulative_nll).sum::<f64>() / n;
    text.push_str(&format!("mean.average_accuracy = {mean_acc:.6}\n"));
    text.push_str(&format!("mean.cumulative_nll = {mean_nll:.6}\n"));
    std::fs::write(path, text).map_err(io_ctx(format!("writing {}", path.display())))
}

/// Execute a config: one training run per data seed, per-run CSV logs,
/// aggregated curve files and a summary.
pub fn run(config: &ExperimentConfig) -> Result<Vec<SeedResult>, CliError> {
    let dir = &config.run.output_dir;
    std::fs::create_dir_all(dir).map_err(io_ctx(format!("creating {}", dir.display())))?;
    let results = execute_runs(config)?;
    for r in &results {
        write_log_csv(&r.log, &dir.join(format!("run_seed{}.csv", r.data_seed)))?;
    }
    write_aggregated_curves(&results, dir)?;
    write_summary_text(&results, &dir.join("summary.txt"))?;
    Ok(results)
}

/// One sweep point's outcome.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub width: usize,
    pub depth: usize,
    pub streams: usize,
    pub window: usize,
    pub alpha0: f64,
    pub weight_decay: f64,
    pub result: Result<(u64, f64), String>,
}

/// All hyperparameter combinations of the grid over the base config.
pub fn grid_points(config: &ExperimentConfig, grid: &GridSpec) -> Vec<ExperimentConfig> {
    let widths = grid.width.clone().unwrap_or_else(|| vec![config.model.width]);
    let depths = grid.depth.clone().unwrap_or_else(|| vec![config.model.depth]);
    let streams = grid.streams.clone().unwrap_or_else(|| vec![config.trainer.streams]);
    let windows = grid.window.clone().unwrap_or_else(|| vec![config.model.window]);
    let alpha0s = grid.alpha0.clone().unwrap_or_else(|| vec![config.trainer.alpha0]);
    let decays = grid.weight_decay.clone().unwrap_or_else(|| vec![config.trainer.weight_decay]);
    let mut points = Vec::new();
    for &w in &widths {
        for &d in &depths {
            for &e in &streams {
                for &c in &windows {
                    for &a in &alpha0s {
                        for &wd in &decays {
                            let mut point = config.clone();
                            point.model.width = w;
                            point.model.depth = d;
                            point.trainer.streams = e;
                            point.model.window = c;
                            point.trainer.alpha0 = a;
                            point.trainer.weight_decay = wd;
                            points.push(point);
                        }
                    }
                }
            }
        }
    }
    points
}

/// Keep the points no other point dominates (lower-or-equal MACs with
/// greater-or-equal accuracy, strict somewhere). The result is sorted by
/// MACs ascending with strictly increasing accuracy.
pub fn pareto_front(points: &[(u64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .cmp(&points[b].0)
            .then(points[b].1.partial_cmp(&points[a].1).expect("accuracy is finite"))
    });
    let mut front = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut last_macs: Option<u64> = None;
    for idx in order {
        let (macs, acc) = points[idx];
        if acc > best_acc && Some(macs) != last_macs {
            front.push(idx);
            best_acc = acc;
            last_macs = Some(macs);
        } else if acc > best_acc && Some(macs) == last_macs {
            // Equal cost, better accuracy: replace.
            front.pop();
            front.push(idx);
            best_acc = acc;
        }
    }
    front
}

/// Run every grid point (first data seed only) and emit the results table
/// plus the non-dominated front.
pub fn sweep(config: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<SweepPoint>, CliError> {
    let dir = &config.run.output_dir;
    std::fs::create_dir_all(dir).map_err(io_ctx(format!("creating {}", dir.display())))?;

    let mut outcomes = Vec::new();
    for mut point in grid_points(config, grid) {
        point.run.data_seeds.truncate(1);
        point.run.output_dir = dir.join(format!(
            "point_w{}_d{}_e{}_c{}_a{}_wd{}",
            point.model.width,
            point.model.depth,
            point.trainer.streams,
            point.model.window,
            point.trainer.alpha0,
            point.trainer.weight_decay
        ));
        let result = match run(&point) {
            Ok(results) => {
                let s = &results[0].summary;
                Ok((s.macs_total, s.average_accuracy))
            }
            Err(e) => Err(e.to_string()),
        };
        outcomes.push(SweepPoint {
            width: point.model.width,
            depth: point.model.depth,
            streams: point.trainer.streams,
            window: point.model.window,
            alpha0: point.trainer.alpha0,
            weight_decay: point.trainer.weight_decay,
            result,
        });
    }

    let header = "width,depth,streams,window,alpha0,weight_decay,status,macs_total,average_accuracy\n";
    let row = |p: &SweepPoint| -> String {
        let (status, macs, acc) = match &p.result {
            Ok((m, a)) => ("ok".to_string(), m.to_string(), a.to_string()),
            Err(e) => (format!("failed: {}", e.replace(',', ";")), String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{status},{macs},{acc}\n",
            p.width, p.depth, p.streams, p.window, p.alpha0, p.weight_decay
        )
    };
    let mut table = String::from(header);
    for p in &outcomes {
        table.push_str(&row(p));
    }
    std::fs::write(dir.join("sweep_results.csv"), table)
        .map_err(io_ctx("writing sweep_results.csv"))?;

    let scored: Vec<(usize, (u64, f64))> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.result.as_ref().ok().map(|&r| (i, r)))
        .collect();
    let points: Vec<(u64, f64)> = scored.iter().map(|(_, r)| *r).collect();
    let front = pareto_front(&points);
    let mut pareto = String::from(header);
    for &fi in &front {
        pareto.push_str(&row(&outcomes[scored[fi].0]));
    }
    std::fs::write(dir.join("pareto.csv"), pareto).map_err(io_ctx("writing pareto.csv"))?;
    Ok(outcomes)
}

/// Window-oracle accuracy over a feature file's label sequence.
pub fn oracle_accuracy(path: &Path, window: usize) -> Result<f64, CliError> {
    let source = load_feature_file(path)?;
    let mut reader = source.reader();
    let mut labels = Vec::with_capacity(source.len());
    while let Some(item) = reader.next_example() {
        labels.push(item.example.label);
    }
    Ok(window_oracle(&labels, window))
}
