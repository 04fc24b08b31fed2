//! Prequential metrics and figure-style aggregations.
//!
//! All reported numbers come from stream 0 of a training run: each record
//! holds the next-step loss and correctness of one example, scored before
//! the model trained on it. Losses are in nats.

mod ablation;
mod csv;
mod macs;
mod oracle;

pub use ablation::{apply_ablation, gradient_stop_schedule, run_ablation, AblationKind, GradientStopSchedule};
pub use csv::{read_log_csv, write_curve_csv, write_log_csv, CsvError};
pub use macs::{macs_forward, training_macs};
pub use oracle::window_oracle;

use thiserror::Error;

/// One prequential observation from stream 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub position: usize,
    pub nll: f64,
    pub correct: bool,
    pub task_id: usize,
    pub within_task_pos: usize,
}

/// Ordered prequential records for one run, plus the run's accounted
/// multiply-accumulate total.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
    pub macs_total: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("incomplete metrics log: {0}")]
    IncompleteLog(String),
}

/// Mean metric per task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskCurvePoint {
    pub task_id: usize,
    pub mean_nll: f64,
    pub mean_accuracy: f64,
    pub count: usize,
}

/// Mean metric per within-task position, averaged across tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct WithinTaskPoint {
    pub within_task_pos: usize,
    pub mean_nll: f64,
    pub mean_accuracy: f64,
    pub count: usize,
}

/// Run-level summary of a complete log.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub total_examples: usize,
    /// Sum of per-example negative log-likelihoods (nats).
    pub cumulative_nll: f64,
    /// Mean of per-example correctness flags.
    pub average_accuracy: f64,
    pub per_task: Vec<TaskCurvePoint>,
    pub within_task: Vec<WithinTaskPoint>,
    pub macs_total: u64,
}

impl Summary {
    /// `key = value` rendering with documented keys.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("examples = {}\n", self.total_examples));
        out.push_str(&format!("cumulative_nll = {:.6}\n", self.cumulative_nll));
        out.push_str(&format!("average_accuracy = {:.6}\n", self.average_accuracy));
        out.push_str(&format!("mean_nll = {:.6}\n", self.cumulative_nll / self.total_examples.max(1) as f64));
        out.push_str(&format!("macs_total = {}\n", self.macs_total));
        out
    }
}

/// Validate and summarize a complete stream-0 log.
///
/// The log must cover positions `0..T` exactly once, in order, with
/// non-negative losses.
pub fn summarize(log: &MetricsLog) -> Result<Summary, EvalError> {
    if log.records.is_empty() {
        return Err(EvalError::IncompleteLog("no records".into()));
    }
    for (i, r) in log.records.iter().enumerate() {
        if r.position != i {
            return Err(EvalError::IncompleteLog(format!(
                "record {i} has position {}, expected {i}",
                r.position
            )));
        }
        if r.nll < 0.0 {
            return Err(EvalError::IncompleteLog(format!("record {i} has negative nll {}", r.nll)));
        }
    }

    let total = log.records.len();
    let cumulative_nll: f64 = log.records.iter().map(|r| r.nll).sum();
    let correct: usize = log.records.iter().filter(|r| r.correct).count();

    let mut per_task: Vec<TaskCurvePoint> = Vec::new();
    for r in &log.records {
        if per_task.last().map(|p| p.task_id) != Some(r.task_id) {
            per_task.push(TaskCurvePoint { task_id: r.task_id, mean_nll: 0.0, mean_accuracy: 0.0, count: 0 });
        }
        let p = per_task.last_mut().unwrap();
        p.mean_nll += r.nll;
        p.mean_accuracy += f64::from(r.correct);
        p.count += 1;
    }
    for p in &mut per_task {
        p.mean_nll /= p.count as f64;
        p.mean_accuracy /= p.count as f64;
    }

    let max_within = log.records.iter().map(|r| r.within_task_pos).max().unwrap_or(0);
    let mut within_task: Vec<WithinTaskPoint> = (0..=max_within)
        .map(|w| WithinTaskPoint { within_task_pos: w, mean_nll: 0.0, mean_accuracy: 0.0, count: 0 })
        .collect();
    for r in &log.records {
        let p = &mut within_task[r.within_task_pos];
        p.mean_nll += r.nll;
        p.mean_accuracy += f64::from(r.correct);
        p.count += 1;
    }
    for p in &mut within_task {
        if p.count > 0 {
            p.mean_nll /= p.count as f64;
            p.mean_accuracy /= p.count as f64;
        }
    }

    Ok(Summary {
        total_examples: total,
        cumulative_nll,
        average_accuracy: correct as f64 / total as f64,
        per_task,
        within_task,
        macs_total: log.macs_total,
    })
}

/// Running mean of correctness after each position.
pub fn running_accuracy(log: &MetricsLog) -> Vec<f64> {
    let mut out = Vec::with_capacity(log.records.len());
    let mut correct = 0usize;
    for (i, r) in log.records.iter().enumerate() {
        correct += usize::from(r.correct);
        out.push(correct as f64 / (i + 1) as f64);
    }
    out
}

/// Pointwise mean and standard error across per-seed curves (curves must
/// share a length).
pub fn aggregate_curves(curves: &[Vec<f64>]) -> Vec<(f64, f64)> {
    assert!(!curves.is_empty(), "aggregate_curves: no curves");
    let len = curves[0].len();
    for c in curves {
        assert_eq!(c.len(), len, "aggregate_curves: length mismatch");
    }
    let n = curves.len() as f64;
    (0..len)
        .map(|i| {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[i] - mean) * (c[i] - mean)).sum::<f64>() / n;
            let stderr = if curves.len() > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
            (mean, stderr)
        })
        .collect()
}

/// Mean accuracy over a task-id range (inclusive bounds), from per-task
/// curve points.
pub fn mean_task_accuracy(summary: &Summary, first_task: usize, last_task: usize) -> f64 {
    let picked: Vec<&TaskCurvePoint> = summary
        .per_task
        .iter()
        .filter(|p| p.task_id >= first_task && p.task_id <= last_task)
        .collect();
    assert!(!picked.is_empty(), "no tasks in range {first_task}..={last_task}");
    picked.iter().map(|p| p.mean_accuracy).sum::<f64>() / picked.len() as f64
}
