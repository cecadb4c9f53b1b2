//! Task-stream generation, normalization, windowing, and dataset files.
//!
//! Two synthetic generators produce streams of classification tasks:
//! coordinate-permuted variants of a common base set, and a multi-rate sensor
//! stand-in with deliberately imbalanced task sizes. Both assign globally
//! unique example ids so trainers can verify that no example appears in two
//! tasks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream_rng, Stream};

/// Where a dataset came from: generator name, seed, and the globally unique
/// ids of its examples (used to audit cross-task disjointness).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub example_ids: Vec<u64>,
}

impl Provenance {
    pub fn new(generator: &str, seed: u64, example_ids: Vec<u64>) -> Self {
        Provenance { generator: generator.to_string(), seed, example_ids }
    }
}

/// One task's data: inputs in `[-1, 1]^d` and integer class labels.
///
/// Labels are stored as class indices; `y_rk = (labels[r] == k)` is the
/// one-hot view the objectives consume.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task_id: u64,
    inputs: Matrix,
    labels: Vec<u16>,
    k: usize,
    pub provenance: Provenance,
}

impl TaskDataset {
    pub fn new(
        task_id: u64,
        inputs: Matrix,
        labels: Vec<u16>,
        k: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} examples",
                labels.len(),
                inputs.rows()
            )));
        }
        if k == 0 {
            return Err(Error::Parameter("class count must be >= 1".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= k) {
            return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
        }
        if provenance.example_ids.len() != inputs.rows() {
            return Err(Error::Shape("one example id per example required".into()));
        }
        if !inputs.data().iter().all(|v| (-1.0..=1.0).contains(v)) {
            return Err(Error::Data("inputs must lie in [-1, 1]".into()));
        }
        Ok(TaskDataset { task_id, inputs, labels, k, provenance })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    /// One-hot row for example `r`.
    pub fn one_hot(&self, r: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.k];
        y[usize::from(self.labels[r])] = 1.0;
        y
    }
}

/// Train/test halves of one task; both carry the same input transform.
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

/// Verify that no example id appears in two tasks.
pub fn check_disjoint(tasks: &[&TaskDataset]) -> Result<()> {
    let mut seen: HashSet<u64> = HashSet::new();
    for t in tasks {
        for id in &t.provenance.example_ids {
            if !seen.insert(*id) {
                return Err(Error::Data(format!(
                    "example id {id} appears in more than one task (task {})",
                    t.task_id
                )));
            }
        }
    }
    Ok(())
}

/// A base pool to slice permuted tasks from.
#[derive(Debug, Clone)]
pub struct BaseDataset {
    pub inputs: Matrix,
    pub labels: Vec<u16>,
    pub k: usize,
}

/// Synthetic classification base: one prototype per class, examples are the
/// prototype plus bounded jitter, everything in `[-1, 1]^d`.
pub fn synthetic_base(
    n: usize,
    d: usize,
    k: usize,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BaseDataset> {
    if n == 0 || d == 0 || k == 0 {
        return Err(Error::Parameter("base dataset dims must be >= 1".into()));
    }
    let prototypes: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| if rng.gen_bool(0.5) { 0.85 } else { -0.85 }).collect())
        .collect();
    let mut inputs = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let class = r % k; // balanced classes
        let row = inputs.row_mut(r);
        for s in 0..d {
            let v = prototypes[class][s] + rng.gen_range(-jitter..jitter);
            row[s] = v.clamp(-1.0, 1.0);
        }
        labels.push(class as u16);
    }
    Ok(BaseDataset { inputs, labels, k })
}

/// Carve `m` tasks out of a base dataset, one fixed coordinate permutation per
/// task applied to both splits; task 1 keeps the identity permutation. Tasks
/// draw disjoint example subsets so the global disjointness invariant holds.
pub fn generate_permuted_tasks(
    base: &BaseDataset,
    m: usize,
    train_per_task: usize,
    test_per_task: usize,
    seed: u64,
) -> Result<Vec<TaskSplit>> {
    if m == 0 {
        return Err(Error::Parameter("task count must be >= 1".into()));
    }
    let per_task = train_per_task + test_per_task;
    if per_task == 0 {
        return Err(Error::Parameter("per-task sizes must be positive".into()));
    }
    if m * per_task > base.inputs.rows() {
        return Err(Error::Data(format!(
            "need {} base examples for {m} disjoint tasks, have {}",
            m * per_task,
            base.inputs.rows()
        )));
    }
    let d = base.inputs.cols();
    let mut rng = stream_rng(seed, Stream::Data);
    let mut order: Vec<usize> = (0..base.inputs.rows()).collect();
    order.shuffle(&mut rng);

    let mut tasks = Vec::with_capacity(m);
    for task_idx in 0..m {
        let mut perm: Vec<usize> = (0..d).collect();
        if task_idx > 0 {
            perm.shuffle(&mut rng);
        }
        let chunk = &order[task_idx * per_task..(task_idx + 1) * per_task];
        let build = |ids: &[usize], split: &str| -> Result<TaskDataset> {
            let mut inputs = Matrix::zeros(ids.len(), d);
            let mut labels = Vec::with_capacity(ids.len());
            for (r, &src) in ids.iter().enumerate() {
                let src_row = base.inputs.row(src);
                let row = inputs.row_mut(r);
                for s in 0..d {
                    row[s] = src_row[perm[s]];
                }
                labels.push(base.labels[src]);
            }
            TaskDataset::new(
                task_idx as u64,
                inputs,
                labels,
                base.k,
                Provenance::new(
                    &format!("permuted/{split}"),
                    seed,
                    ids.iter().map(|&i| i as u64).collect(),
                ),
            )
        };
        let train = build(&chunk[..train_per_task], "train")?;
        let test = build(&chunk[train_per_task..], "test")?;
        tasks.push(TaskSplit { train, test });
    }
    Ok(tasks)
}

/// Per-channel normalization statistics, computed from training data only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Variance floor applied to constant channels so z-scoring stays defined.
pub const VARIANCE_FLOOR: f64 = 1e-8;

impl NormStats {
    /// Fit mean/std per channel from training rows.
    pub fn fit(train: &[Vec<f64>]) -> Result<Self> {
        let first = train.first().ok_or_else(|| {
            Error::Parameter("cannot fit normalization on an empty training set".into())
        })?;
        let channels = first.len();
        let n = train.len() as f64;
        let mut mean = vec![0.0; channels];
        for row in train {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; channels];
        for row in train {
            for c in 0..channels {
                let dv = row[c] - mean[c];
                var[c] += dv * dv;
            }
        }
        let std = var.iter().map(|v| (v / n).max(VARIANCE_FLOOR).sqrt()).collect();
        Ok(NormStats { mean, std })
    }
}

/// Normalize one value given its channel statistics: z-score, clip to
/// `[-2, 2]`, then map linearly onto `[-1, 1]` via
/// `x = 2 * ((x - min)/(max - min) - 1/2)` with `min = -2`, `max = 2`.
pub fn normalize_value(raw: f64, mean: f64, std: f64) -> f64 {
    let z = ((raw - mean) / std).clamp(-2.0, 2.0);
    2.0 * ((z - (-2.0)) / (2.0 - (-2.0)) - 0.5)
}

/// Normalize a full row with train-fitted statistics.
pub fn normalize_row(raw: &[f64], stats: &NormStats) -> Result<Vec<f64>> {
    if raw.len() != stats.mean.len() {
        return Err(Error::Shape(format!(
            "row has {} channels, statistics have {}",
            raw.len(),
            stats.mean.len()
        )));
    }
    Ok(raw
        .iter()
        .enumerate()
        .map(|(c, &v)| normalize_value(v, stats.mean[c], stats.std[c]))
        .collect())
}

/// A fixed-length window cut from a continuous sensor session.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSegment {
    /// `WINDOW_POINTS * channels` values, flattened channel-major.
    pub values: Vec<f64>,
    /// Nominal sampling rate tag (Hz).
    pub sampling_rate: u32,
    pub label: u16,
}

/// Points per window.
pub const WINDOW_POINTS: usize = 100;
/// Gap (milliseconds) that splits a stream into separate sessions.
pub const SESSION_GAP_MS: f64 = 300.0;
/// Default window overlap for majority classes.
pub const DEFAULT_OVERLAP: f64 = 0.25;
/// Maximum window overlap for minority classes.
pub const MAX_OVERLAP: f64 = 0.90;

/// A raw multi-channel stream with timestamps and per-point labels.
#[derive(Debug, Clone)]
pub struct RawStream {
    pub timestamps_ms: Vec<f64>,
    /// `channels[c][t]` is channel `c` at point `t`.
    pub channels: Vec<Vec<f64>>,
    pub labels: Vec<u16>,
    pub sampling_rate: u32,
}

/// Result of windowing a stream: the segments plus the sessions too short to
/// yield any.
#[derive(Debug, Clone)]
pub struct SegmentationOutcome {
    pub segments: Vec<StreamSegment>,
    /// `(start_index, length)` of each skipped session.
    pub skipped_sessions: Vec<(usize, usize)>,
}

/// Split a stream into gap-free sessions and cut overlapping windows of
/// [`WINDOW_POINTS`] points from each. Windows never span a session break;
/// per-class overlap fractions control the stride. A window takes the label
/// of its first point.
pub fn segment_stream(
    stream: &RawStream,
    overlap_for_class: &dyn Fn(u16) -> f64,
) -> Result<SegmentationOutcome> {
    let n = stream.timestamps_ms.len();
    if stream.channels.is_empty() {
        return Err(Error::Parameter("stream needs at least one channel".into()));
    }
    for ch in &stream.channels {
        if ch.len() != n {
            return Err(Error::Shape("channel length differs from timestamp count".into()));
        }
    }
    if stream.labels.len() != n {
        return Err(Error::Shape("label length differs from timestamp count".into()));
    }
    if stream.timestamps_ms.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Data("timestamps must be monotone non-decreasing".into()));
    }

    // session boundaries at gaps > threshold
    let mut sessions: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for t in 1..n {
        if stream.timestamps_ms[t] - stream.timestamps_ms[t - 1] > SESSION_GAP_MS {
            sessions.push((start, t - start));
            start = t;
        }
    }
    if n > 0 {
        sessions.push((start, n - start));
    }

    let mut segments = Vec::new();
    let mut skipped = Vec::new();
    for (s_start, s_len) in sessions {
        if s_len < WINDOW_POINTS {
            skipped.push((s_start, s_len));
            continue;
        }
        let mut offset = 0usize;
        while offset + WINDOW_POINTS <= s_len {
            let begin = s_start + offset;
            let label = stream.labels[begin];
            let mut values = Vec::with_capacity(WINDOW_POINTS * stream.channels.len());
            for ch in &stream.channels {
                values.extend_from_slice(&ch[begin..begin + WINDOW_POINTS]);
            }
            segments.push(StreamSegment { values, sampling_rate: stream.sampling_rate, label });
            let overlap = overlap_for_class(label).clamp(0.0, MAX_OVERLAP);
            let stride = ((WINDOW_POINTS as f64) * (1.0 - overlap)).round().max(1.0) as usize;
            offset += stride;
        }
    }
    Ok(SegmentationOutcome { segments, skipped_sessions: skipped })
}

/// Configuration of the synthetic multi-rate stream generator.
#[derive(Debug, Clone)]
pub struct MultiRateSpec {
    /// Sampling-rate tag (Hz) per task, in training order.
    pub rates: Vec<u32>,
    /// Training examples per task; deliberately imbalanced streams exercise
    /// heterogeneous scheduling.
    pub train_sizes: Vec<usize>,
    /// Test examples per task.
    pub test_sizes: Vec<usize>,
    pub class_count: usize,
}

/// Generate one task per sampling rate: class-conditional sinusoid windows
/// whose frequency scales with the rate tag, z-scored and mapped into
/// `[-1, 1]` with train-fitted statistics.
pub fn generate_multirate_stream(spec: &MultiRateSpec, seed: u64) -> Result<Vec<TaskSplit>> {
    if spec.rates.is_empty()
        || spec.rates.len() != spec.train_sizes.len()
        || spec.rates.len() != spec.test_sizes.len()
    {
        return Err(Error::Parameter(
            "rates, train_sizes and test_sizes must be equal-length and non-empty".into(),
        ));
    }
    if spec.class_count == 0 {
        return Err(Error::Parameter("class count must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::Data);
    let mut next_id: u64 = 0;
    let mut tasks = Vec::with_capacity(spec.rates.len());
    for (task_idx, &rate) in spec.rates.iter().enumerate() {
        let n_train = spec.train_sizes[task_idx];
        let n_test = spec.test_sizes[task_idx];
        if n_train == 0 || n_test == 0 {
            return Err(Error::Parameter("task sizes must be >= 1".into()));
        }
        let raw: Vec<(Vec<f64>, u16)> = (0..n_train + n_test)
            .map(|i| {
                let class = (i % spec.class_count) as u16;
                (synthetic_window(rate, class, &mut rng), class)
            })
            .collect();
        let train_rows: Vec<Vec<f64>> =
            raw[..n_train].iter().map(|(v, _)| v.clone()).collect();
        let stats = NormStats::fit(&train_rows)?;

        let build = |slice: &[(Vec<f64>, u16)],
                     ids: std::ops::Range<u64>,
                     split: &str|
         -> Result<TaskDataset> {
            let mut inputs = Matrix::zeros(slice.len(), WINDOW_POINTS);
            let mut labels = Vec::with_capacity(slice.len());
            for (r, (row, label)) in slice.iter().enumerate() {
                let norm = normalize_row(row, &stats)?;
                inputs.row_mut(r).copy_from_slice(&norm);
                labels.push(*label);
            }
            TaskDataset::new(
                task_idx as u64,
                inputs,
                labels,
                spec.class_count,
                Provenance::new(&format!("multirate/{split}"), seed, ids.collect()),
            )
        };
        let train = build(&raw[..n_train], next_id..next_id + n_train as u64, "train")?;
        next_id += n_train as u64;
        let test = build(&raw[n_train..], next_id..next_id + n_test as u64, "test")?;
        next_id += n_test as u64;
        tasks.push(TaskSplit { train, test });
    }
    Ok(tasks)
}

fn synthetic_window(rate: u32, class: u16, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // class sets the base frequency and amplitude; the rate tag stretches the
    // sampling grid so different rates look genuinely different
    let freq = 0.5 + f64::from(class) * 0.9;
    let amp = 0.6 + 0.15 * f64::from(class % 3);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let dt = 1.0 / f64::from(rate);
    (0..WINDOW_POINTS)
        .map(|t| {
            let x = t as f64 * dt;
            amp * (std::f64::consts::TAU * freq * x + phase).sin()
                + f64::from(class) * 0.1
                + rng.gen_range(-0.2..0.2)
        })
        .collect()
}

// --- dataset files -------------------------------------------------------------
//
// Format `L2DT` v1, little-endian: magic | version u32 | task_id u64 | d u32 |
// k u32 | n u64 | inputs f64 row-major | labels u16.

const DATASET_MAGIC: &[u8; 4] = b"L2DT";
const DATASET_VERSION: u32 = 1;

/// Write one task dataset in the columnar binary format.
pub fn save_dataset(path: &Path, ds: &TaskDataset) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&ds.task_id.to_le_bytes())?;
    w.write_all(&(ds.dim() as u32).to_le_bytes())?;
    w.write_all(&(ds.class_count() as u32).to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    for v in ds.inputs.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for l in &ds.labels {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

/// Read a task dataset written by [`save_dataset`]. Example ids are assigned
/// from the file order, offset by `id_base` so multiple files stay disjoint.
pub fn load_dataset(path: &Path, id_base: u64) -> Result<TaskDataset> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file (bad magic)".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let task_id = u64::from_le_bytes(u64buf);
    r.read_exact(&mut u32buf)?;
    let d = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf)?;
    let k = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u64buf)?;
    let n = u64::from_le_bytes(u64buf) as usize;

    let mut data = Vec::with_capacity(n * d);
    let mut f64buf = [0u8; 8];
    for _ in 0..n * d {
        r.read_exact(&mut f64buf)?;
        data.push(f64::from_le_bytes(f64buf));
    }
    let mut labels = Vec::with_capacity(n);
    let mut u16buf = [0u8; 2];
    for _ in 0..n {
        r.read_exact(&mut u16buf)?;
        labels.push(u16::from_le_bytes(u16buf));
    }
    TaskDataset::new(
        task_id,
        Matrix::from_vec(n, d, data)?,
        labels,
        k,
        Provenance::new("file", 0, (id_base..id_base + n as u64).collect()),
    )
}

/// Load the standard IDX image/label pair (as distributed for MNIST), scaling
/// pixel bytes into `[-1, 1]`.
pub fn load_idx_pair(images: &Path, labels: &Path, k: usize) -> Result<BaseDataset> {
    let img = std::fs::read(images)?;
    let lab = std::fs::read(labels)?;
    if img.len() < 16 || &img[0..4] != [0, 0, 8, 3] {
        return Err(Error::Format("not an IDX3 (u8 images) file".into()));
    }
    if lab.len() < 8 || &lab[0..4] != [0, 0, 8, 1] {
        return Err(Error::Format("not an IDX1 (u8 labels) file".into()));
    }
    let n = u32::from_be_bytes(img[4..8].try_into().expect("4 bytes")) as usize;
    let rows = u32::from_be_bytes(img[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_be_bytes(img[12..16].try_into().expect("4 bytes")) as usize;
    let n_labels = u32::from_be_bytes(lab[4..8].try_into().expect("4 bytes")) as usize;
    if n != n_labels {
        return Err(Error::Format(format!("{n} images but {n_labels} labels")));
    }
    let d = rows * cols;
    if img.len() != 16 + n * d {
        return Err(Error::Format("image payload length mismatch".into()));
    }
    let data: Vec<f64> =
        img[16..].iter().map(|&b| f64::from(b) / 127.5 - 1.0).collect();
    let labels: Vec<u16> = lab[8..8 + n].iter().map(|&b| u16::from(b)).collect();
    if let Some(bad) = labels.iter().find(|&&l| usize::from(l) >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    Ok(BaseDataset { inputs: Matrix::from_vec(n, d, data)?, labels, k })
}
