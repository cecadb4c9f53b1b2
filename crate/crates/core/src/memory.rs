//! Disjoint batch partitions and the episodic memory.
//!
//! The privacy argument leans on two structural facts enforced here: batches
//! within a task are fixed and pairwise disjoint (and identical across
//! epochs), and the memory stores whole batches that are never re-sampled —
//! every reference set a trainer sees is bit-identical to a stored entry.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::{BatchView, PerturbedDataset};

/// A fixed split of one task's examples into disjoint batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    pub task_id: u64,
    /// Ordered index sets; the last batch may be short.
    pub batches: Vec<Vec<usize>>,
    pub batch_size: usize,
}

impl BatchPartition {
    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// Exact disjoint-and-covering check against a dataset of `n` examples.
    pub fn verify(&self, n: usize) -> Result<()> {
        let mut seen = HashSet::with_capacity(n);
        for batch in &self.batches {
            for &i in batch {
                if i >= n {
                    return Err(Error::Data(format!("index {i} out of range ({n} examples)")));
                }
                if !seen.insert(i) {
                    return Err(Error::Data(format!("index {i} appears in two batches")));
                }
            }
        }
        if seen.len() != n {
            return Err(Error::Data(format!(
                "partition covers {} of {n} examples",
                seen.len()
            )));
        }
        Ok(())
    }
}

/// Randomly permute `0..n` and chunk into `ceil(n / batch_size)` batches.
///
/// The partition is computed once per task and reused for every epoch.
pub fn partition(
    n: usize,
    task_id: u64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<BatchPartition> {
    if n == 0 {
        return Err(Error::Parameter("cannot partition an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let batches = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    Ok(BatchPartition { task_id, batches, batch_size })
}

/// One stored reference batch: indices for audit plus the already-perturbed
/// rows. Raw data never enters the memory.
#[derive(Debug, Clone)]
pub struct StoredBatch {
    pub task_id: u64,
    pub batch_id: usize,
    pub indices: Vec<usize>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u16>,
    k: usize,
    n: usize,
    fingerprint: u64,
}

impl StoredBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Borrow the stored batch for gradient computation.
    pub fn view(&self) -> BatchView<'_> {
        BatchView {
            rows: self.rows.iter().map(|r| r.as_slice()).collect(),
            labels: self.labels.clone(),
            k: self.k,
            n: self.n,
            fingerprint: self.fingerprint,
        }
    }
}

/// Ordered, append-only collection of reference batches, one per finished task.
#[derive(Debug, Clone, Default)]
pub struct EpisodicMemory {
    entries: Vec<StoredBatch>,
    tasks_seen: HashSet<u64>,
}

impl EpisodicMemory {
    pub fn new() -> Self {
        EpisodicMemory::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoredBatch] {
        &self.entries
    }

    /// Append one uniformly chosen batch of a finished task.
    ///
    /// Earlier entries are never touched; appending twice for one task is a
    /// usage error.
    pub fn append_task(
        &mut self,
        dataset: &PerturbedDataset,
        part: &BatchPartition,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if self.tasks_seen.contains(&part.task_id) {
            return Err(Error::Usage(format!(
                "memory already holds an entry for task {}",
                part.task_id
            )));
        }
        if part.batches.is_empty() {
            return Err(Error::Parameter("partition has no batches".into()));
        }
        let batch_id = rng.gen_range(0..part.batches.len());
        let indices = part.batches[batch_id].clone();
        let (rows, labels) = dataset.copy_rows(&indices);
        self.entries.push(StoredBatch {
            task_id: part.task_id,
            batch_id,
            indices,
            rows,
            labels,
            k: dataset.class_count(),
            n: dataset.denominator(),
            fingerprint: dataset.bundle_fingerprint(),
        });
        self.tasks_seen.insert(part.task_id);
        Ok(())
    }

    /// Uniform choice over stored entries, returned whole. Never builds a
    /// fresh sub-sample.
    pub fn sample_reference(&self, rng: &mut ChaCha8Rng) -> Result<&StoredBatch> {
        if self.entries.is_empty() {
            return Err(Error::Usage(
                "episodic memory is empty; projection does not apply to the first task".into(),
            ));
        }
        let idx = rng.gen_range(0..self.entries.len());
        Ok(&self.entries[idx])
    }

    /// `(task_id, batch_id, indices)` records for the audit manifest.
    pub fn manifest(&self) -> Vec<(u64, usize, Vec<usize>)> {
        self.entries
            .iter()
            .map(|e| (e.task_id, e.batch_id, e.indices.clone()))
            .collect()
    }

    /// Manifest as CSV: `task_id,batch_id,indices` with space-separated indices.
    pub fn manifest_csv(&self) -> String {
        let mut out = String::from("task_id,batch_id,indices\n");
        for (task, batch, indices) in self.manifest() {
            let joined: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{task},{batch},{}\n", joined.join(" ")));
        }
        out
    }
}
