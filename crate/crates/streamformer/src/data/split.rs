//! Piecewise-stationary task sequences over a base dataset.
//!
//! Each task picks `ways` distinct base classes, maps them through a
//! random bijection onto the observed labels `0..ways`, and samples
//! examples uniformly (with replacement) from the chosen class pools.
//! Task boundaries re-draw both the class selection and the bijection, so
//! the feature-to-label mapping changes abruptly.

use std::sync::Arc;

use rand::Rng;

use super::blobs::BaseDataset;
use super::{AnnotatedExample, DataError, DataReader, DataSource};
use crate::model::Example;
use crate::rng::seeded;

/// Shape of a generated sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceSpec {
    pub num_tasks: usize,
    pub examples_per_task: usize,
    /// Observed classes per task.
    pub ways: usize,
    pub seed: u64,
}

impl SequenceSpec {
    pub fn total_examples(&self) -> usize {
        self.num_tasks * self.examples_per_task
    }
}

/// Per-task class choices, for boundary diagnostics.
#[derive(Clone, Debug)]
pub struct TaskSchedule {
    /// `chosen[task][observed_label]` = base class mapped to that label.
    pub chosen: Vec<Vec<usize>>,
}

#[derive(Debug)]
struct SequenceData {
    base: BaseDataset,
    spec: SequenceSpec,
    schedule: TaskSchedule,
    /// Per position: (base class index, pool index).
    draws: Vec<(usize, usize)>,
    labels: Vec<usize>,
}

/// Deterministic reader over the generated task sequence.
#[derive(Debug)]
pub struct SplitSequenceSource {
    data: Arc<SequenceData>,
}

/// Generate the full task sequence deterministically from the spec seed.
pub fn make_split_sequence(base: BaseDataset, spec: SequenceSpec) -> Result<SplitSequenceSource, DataError> {
    if spec.ways == 0 || spec.num_tasks == 0 || spec.examples_per_task == 0 {
        return Err(DataError::InvalidConfig("tasks, examples per task and ways must be >= 1".into()));
    }
    if spec.ways > base.num_classes {
        return Err(DataError::InvalidConfig(format!(
            "ways {} exceeds base classes {}",
            spec.ways, base.num_classes
        )));
    }
    let mut rng = seeded(spec.seed);
    let mut chosen = Vec::with_capacity(spec.num_tasks);
    let mut draws = Vec::with_capacity(spec.total_examples());
    let mut labels = Vec::with_capacity(spec.total_examples());
    for _ in 0..spec.num_tasks {
        // Draw `ways` distinct classes, then shuffle them: index in the
        // shuffled list is the observed label (a random bijection).
        let mut classes = sample_distinct(&mut rng, base.num_classes, spec.ways);
        fisher_yates(&mut rng, &mut classes);
        for _ in 0..spec.examples_per_task {
            let observed = rng.random_range(0..spec.ways);
            let class = classes[observed];
            let pool_idx = rng.random_range(0..base.pools[class].len());
            draws.push((class, pool_idx));
            labels.push(observed);
        }
        chosen.push(classes);
    }
    Ok(SplitSequenceSource {
        data: Arc::new(SequenceData { base, spec, schedule: TaskSchedule { chosen }, draws, labels }),
    })
}

impl SplitSequenceSource {
    pub fn schedule(&self) -> &TaskSchedule {
        &self.data.schedule
    }

    pub fn spec(&self) -> &SequenceSpec {
        &self.data.spec
    }
}

fn sample_distinct<R: Rng>(rng: &mut R, population: usize, count: usize) -> Vec<usize> {
    // Partial Fisher-Yates over the class index range.
    let mut all: Vec<usize> = (0..population).collect();
    for i in 0..count {
        let j = rng.random_range(i..population);
        all.swap(i, j);
    }
    all.truncate(count);
    all
}

fn fisher_yates<R: Rng>(rng: &mut R, items: &mut [usize]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

struct SplitReader {
    data: Arc<SequenceData>,
    pos: usize,
}

impl DataReader for SplitReader {
    fn next_example(&mut self) -> Option<AnnotatedExample> {
        if self.pos >= self.data.draws.len() {
            return None;
        }
        let (class, pool_idx) = self.data.draws[self.pos];
        let features = self.data.base.pools[class][pool_idx].clone();
        let item = AnnotatedExample {
            example: Example::new(features, self.data.labels[self.pos]),
            task_id: self.pos / self.data.spec.examples_per_task,
            within_task_pos: self.pos % self.data.spec.examples_per_task,
        };
        self.pos += 1;
        Some(item)
    }

    fn position(&self) -> usize {
        self.pos
    }

    fn reset(&mut self) {
        self.pos = 0;
    }
}

impl DataSource for SplitSequenceSource {
    fn reader(&self) -> Box<dyn DataReader + Send> {
        Box::new(SplitReader { data: Arc::clone(&self.data), pos: 0 })
    }

    fn len(&self) -> usize {
        self.data.draws.len()
    }

    fn num_classes(&self) -> usize {
        self.data.spec.ways
    }

    fn feature_dim(&self) -> usize {
        self.data.base.feature_dim
    }
}
