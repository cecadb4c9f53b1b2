//! The auto-encoder + classifier network and its perturbed objectives.
//!
//! The network is `f(x) = G(a(x))`: a linear encoder `a` producing a hidden
//! code, and a small tanh classifier `G` on top. Both training objectives are
//! low-order polynomials in the weights, so privacy noise can be injected
//! into their *coefficients* once instead of into every gradient:
//!
//! * reconstruction: `sum_r sum_s (1/2 - xbar_rs) * <encoder_row_s, hbar_r>`,
//!   coefficients `(xbar, hbar)` carry the noise;
//! * classification: `sum_k sum_r [ z_rk - z_rk*y_rk - |z_rk|/2 - z_rk^2/8 ]`
//!   with `z_rk = <h_pi_r, out_col_k>`, noise enters the first-order
//!   coefficients as an offset on `h_pi`.
//!
//! Gradients treat the activation coefficients as data (they are what the
//! noise protects), so each stated closed form is the exact derivative of the
//! polynomial evaluated at fixed activations. Activations are recomputed from
//! the current weights at every step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::privacy::NoiseBundle;
use crate::rng::hash_f64s;

/// Layer widths of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    /// Input dimension.
    pub d: usize,
    /// Encoder hidden width.
    pub h1_size: usize,
    /// Classifier hidden widths; the last entry is the width feeding the
    /// output layer.
    pub hidden_sizes: Vec<usize>,
    /// Number of classes.
    pub k: usize,
}

impl ModelShape {
    pub fn new(d: usize, h1_size: usize, hidden_sizes: Vec<usize>, k: usize) -> Result<Self> {
        if d == 0 || h1_size == 0 || k == 0 {
            return Err(Error::Parameter("model dimensions must all be >= 1".into()));
        }
        if hidden_sizes.is_empty() || hidden_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Parameter(
                "classifier needs at least one hidden layer, all widths >= 1".into(),
            ));
        }
        Ok(ModelShape { d, h1_size, hidden_sizes, k })
    }

    /// Width of the last hidden layer (the output layer's input).
    pub fn h_pi_size(&self) -> usize {
        *self.hidden_sizes.last().expect("validated non-empty")
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let mut count = self.d * self.h1_size;
        let mut prev = self.h1_size;
        for &w in &self.hidden_sizes {
            count += prev * w;
            prev = w;
        }
        count + prev * self.k
    }
}

/// Network weights: the encoder matrix and the classifier stack.
///
/// `classifier[i]` maps layer `i`'s input to its output; the final matrix is
/// the linear output layer. Every released per-task checkpoint is a deep copy
/// of this struct.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `d x h1_size`; columns are kept on a fixed 1-norm ball.
    pub encoder: Matrix,
    /// Hidden layers (tanh) followed by the output layer (linear).
    pub classifier: Vec<Matrix>,
}

impl ModelParams {
    /// Uniform init in `[-r, r]` with `r = 1/sqrt(fan_in)`, encoder columns
    /// clipped onto the norm ball so the budget is well-defined from step 0.
    pub fn init(shape: &ModelShape, encoder_column_bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut encoder = random_matrix(shape.d, shape.h1_size, rng);
        encoder.clip_columns_l1(encoder_column_bound);
        let mut classifier = Vec::with_capacity(shape.hidden_sizes.len() + 1);
        let mut prev = shape.h1_size;
        for &w in &shape.hidden_sizes {
            classifier.push(random_matrix(prev, w, rng));
            prev = w;
        }
        classifier.push(random_matrix(prev, shape.k, rng));
        ModelParams { encoder, classifier }
    }

    pub fn matches_shape(&self, shape: &ModelShape) -> bool {
        if self.encoder.rows() != shape.d || self.encoder.cols() != shape.h1_size {
            return false;
        }
        if self.classifier.len() != shape.hidden_sizes.len() + 1 {
            return false;
        }
        let mut prev = shape.h1_size;
        for (m, &w) in self.classifier.iter().zip(&shape.hidden_sizes) {
            if m.rows() != prev || m.cols() != w {
                return false;
            }
            prev = w;
        }
        let out = self.classifier.last().expect("non-empty");
        out.rows() == prev && out.cols() == shape.k
    }

    pub fn output_layer(&self) -> &Matrix {
        self.classifier.last().expect("classifier stack is never empty")
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let r = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-r..r)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

/// A task dataset whose inputs carry the run's input noise: `xbar = x + chi1/n`.
///
/// Immutable once built; everything downstream reads from here and never from
/// the raw data again.
#[derive(Debug, Clone)]
pub struct PerturbedDataset {
    pub task_id: u64,
    xbar: Matrix,
    labels: Vec<u16>,
    k: usize,
    /// Perturbation denominator (dataset size or batch size).
    n: usize,
    bundle_fingerprint: u64,
}

impl PerturbedDataset {
    pub fn len(&self) -> usize {
        self.xbar.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.xbar.cols()
    }

    pub fn denominator(&self) -> usize {
        self.n
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn bundle_fingerprint(&self) -> u64 {
        self.bundle_fingerprint
    }

    /// Borrow a batch by example indices.
    pub fn batch(&self, indices: &[usize]) -> BatchView<'_> {
        BatchView {
            rows: indices.iter().map(|&i| self.xbar.row(i)).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
            n: self.n,
            fingerprint: self.bundle_fingerprint,
        }
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> BatchView<'_> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// Copy out rows for storage in episodic memory.
    pub fn copy_rows(&self, indices: &[usize]) -> (Vec<Vec<f64>>, Vec<u16>) {
        let rows = indices.iter().map(|&i| self.xbar.row(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (rows, labels)
    }
}

/// Apply the input perturbation `xbar_r = x_r + chi1/n` to a whole task.
///
/// One noise bundle per run: every example receives the same offset vector.
pub fn perturb_dataset(
    raw: &TaskDataset,
    noise: &NoiseBundle,
    n: usize,
) -> Result<PerturbedDataset> {
    if n == 0 {
        return Err(Error::Parameter("perturbation denominator must be >= 1".into()));
    }
    if noise.input_noise.len() != raw.dim() {
        return Err(Error::Shape(format!(
            "input noise has {} entries but inputs have dimension {}",
            noise.input_noise.len(),
            raw.dim()
        )));
    }
    let d = raw.dim();
    let mut xbar = Matrix::zeros(raw.len(), d);
    let inv_n = 1.0 / n as f64;
    for r in 0..raw.len() {
        let src = raw.inputs().row(r);
        let row = xbar.row_mut(r);
        for s in 0..d {
            row[s] = src[s] + noise.input_noise[s] * inv_n;
        }
    }
    Ok(PerturbedDataset {
        task_id: raw.task_id,
        xbar,
        labels: raw.labels().to_vec(),
        k: raw.class_count(),
        n,
        bundle_fingerprint: noise.fingerprint(),
    })
}

/// A borrowed batch: perturbed input rows plus labels.
#[derive(Debug, Clone)]
pub struct BatchView<'a> {
    pub rows: Vec<&'a [f64]>,
    pub labels: Vec<u16>,
    pub k: usize,
    /// Perturbation denominator used for the hidden and label noise terms.
    pub n: usize,
    pub fingerprint: u64,
}

impl<'a> BatchView<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-example encoder activations for one batch.
///
/// `hbar` is what both objectives consume; gradients treat it as fixed
/// coefficient data, so it is computed once per step and passed around
/// explicitly.
#[derive(Debug, Clone)]
pub struct EncoderActivations {
    /// `h_r = clip(encoderᵀ xbar_r)` before noise.
    pub h: Vec<Vec<f64>>,
    /// `hbar_r = h_r + 2*chi2/n`.
    pub hbar: Vec<Vec<f64>>,
}

/// Encode a batch: `h = clip(encoderᵀ xbar)`, `hbar = h + 2*chi2/n`.
pub fn encode_batch(
    params: &ModelParams,
    batch: &BatchView<'_>,
    noise: &NoiseBundle,
) -> Result<EncoderActivations> {
    if batch.fingerprint != noise.fingerprint() {
        return Err(Error::Usage(
            "batch was perturbed with a different noise bundle than the one supplied".into(),
        ));
    }
    let h1 = params.encoder.cols();
    if noise.hidden_noise.len() != h1 {
        return Err(Error::Shape(format!(
            "hidden noise has {} entries but encoder width is {}",
            noise.hidden_noise.len(),
            h1
        )));
    }
    let scale = 2.0 / batch.n as f64;
    let mut h_all = Vec::with_capacity(batch.len());
    let mut hbar_all = Vec::with_capacity(batch.len());
    for row in &batch.rows {
        let mut h = vec![0.0; h1];
        params.encoder.transpose_apply(row, &mut h);
        for v in h.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        let hbar: Vec<f64> =
            h.iter().zip(&noise.hidden_noise).map(|(hv, nv)| hv + nv * scale).collect();
        if hbar.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite encoder activation".into()));
        }
        h_all.push(h);
        hbar_all.push(hbar);
    }
    Ok(EncoderActivations { h: h_all, hbar: hbar_all })
}

/// The reconstruction objective as a polynomial in the encoder weights, at
/// fixed activations: `sum_r sum_s (1/2 - xbar_rs) * <encoder_row_s, hbar_r>`.
///
/// Equivalently `sum_r [ sum_s <encoder_row_s, hbar_r>/2 - <xbar_r, xtilde_r> ]`
/// with `xtilde_r = encoder * hbar_r` the reconstruction of `xbar_r`.
pub fn reconstruction_objective(
    encoder: &Matrix,
    batch: &BatchView<'_>,
    acts: &EncoderActivations,
) -> f64 {
    let d = encoder.rows();
    let mut total = 0.0;
    for (row, hbar) in batch.rows.iter().zip(&acts.hbar) {
        for s in 0..d {
            total += (0.5 - row[s]) * dot(encoder.row(s), hbar);
        }
    }
    total
}

/// Exact gradient of [`reconstruction_objective`] with respect to the encoder:
/// `grad[s][j] = sum_r (1/2 - xbar_rs) * hbar_r[j]`.
///
/// The activations are coefficient data, so the objective is linear in the
/// weights and the gradient does not depend on them. Saturated units
/// contribute through their clipped value only.
pub fn reconstruction_gradient(
    batch: &BatchView<'_>,
    acts: &EncoderActivations,
    d: usize,
    h1_size: usize,
) -> Matrix {
    let mut grad = Matrix::zeros(d, h1_size);
    for (row, hbar) in batch.rows.iter().zip(&acts.hbar) {
        for s in 0..d {
            let coeff = 0.5 - row[s];
            let grow = grad.row_mut(s);
            for j in 0..h1_size {
                grow[j] += coeff * hbar[j];
            }
        }
    }
    grad
}

/// Per-example classifier activations for one batch.
#[derive(Debug, Clone)]
pub struct ClassifierActivations {
    /// Post-tanh activations per hidden layer, per example;
    /// `hidden[r].last()` is the output layer's input.
    pub hidden: Vec<Vec<Vec<f64>>>,
    /// Raw output-layer products `z_rk`.
    pub logits: Vec<Vec<f64>>,
}

impl ClassifierActivations {
    pub fn h_pi(&self, r: usize) -> &[f64] {
        self.hidden[r].last().expect("at least one hidden layer")
    }
}

/// Run the classifier stack on encoded activations.
pub fn classifier_forward(
    params: &ModelParams,
    acts: &EncoderActivations,
) -> Result<ClassifierActivations> {
    let n_hidden = params.classifier.len() - 1;
    let mut hidden_all = Vec::with_capacity(acts.hbar.len());
    let mut logits_all = Vec::with_capacity(acts.hbar.len());
    for hbar in &acts.hbar {
        let mut hidden = Vec::with_capacity(n_hidden);
        let mut input: &[f64] = hbar;
        for layer in &params.classifier[..n_hidden] {
            let mut out = vec![0.0; layer.cols()];
            layer.transpose_apply(input, &mut out);
            for v in out.iter_mut() {
                *v = v.tanh();
            }
            hidden.push(out);
            input = hidden.last().expect("just pushed");
        }
        let out_layer = params.output_layer();
        let mut logits = vec![0.0; out_layer.cols()];
        out_layer.transpose_apply(input, &mut logits);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite classifier activation".into()));
        }
        hidden_all.push(hidden);
        logits_all.push(logits);
    }
    Ok(ClassifierActivations { hidden: hidden_all, logits: logits_all })
}

/// Softmax class scores; always sum to 1 with each score in `[0, 1]`.
pub fn class_scores(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_scores(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Classify one raw input through the run's transform pipeline.
///
/// The same offsets used in training (`chi1/n` on the input, `2*chi2/n` on
/// the hidden code) are applied at inference so the classifier sees inputs
/// from the distribution it was trained on; pass a zero bundle for noiseless
/// models. The offsets are data-independent, so publishing them alongside the
/// parameters costs no budget.
pub fn predict(
    params: &ModelParams,
    x: &[f64],
    noise: &NoiseBundle,
    n: usize,
) -> Result<usize> {
    let inv_n = 1.0 / n as f64;
    let xbar: Vec<f64> =
        x.iter().zip(&noise.input_noise).map(|(v, nv)| v + nv * inv_n).collect();
    if xbar.len() != params.encoder.rows() {
        return Err(Error::Shape(format!(
            "input has {} entries but encoder expects {}",
            xbar.len(),
            params.encoder.rows()
        )));
    }
    let batch = BatchView {
        rows: vec![xbar.as_slice()],
        labels: vec![0],
        k: params.output_layer().cols(),
        n,
        fingerprint: noise.fingerprint(),
    };
    let acts = encode_batch(params, &batch, noise)?;
    let cacts = classifier_forward(params, &acts)?;
    Ok(argmax_scores(&class_scores(&cacts.logits[0])))
}

/// First/second-order polynomial classification objective at fixed
/// activations, with the label-noise offset `chi3/n` added to the first-order
/// coefficients:
///
/// `sum_k sum_r [ zoff_rk - zoff_rk*y_rk - |z_rk|/2 - z_rk^2/8 ]`
///
/// where `z_rk = <h_pi_r, out_col_k>` and `zoff_rk = <h_pi_r + chi3/n, out_col_k>`.
/// With a zero offset this is exactly the unperturbed polynomial.
pub fn classifier_objective(
    params: &ModelParams,
    cacts: &ClassifierActivations,
    labels: &[u16],
    noise: &NoiseBundle,
    n: usize,
) -> f64 {
    let out = params.output_layer();
    let k_count = out.cols();
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let h_pi = cacts.h_pi(r);
        for k in 0..k_count {
            let z = cacts.logits[r][k];
            let off: f64 =
                (0..h_pi.len()).map(|j| noise.label_noise[j] * scale * out.get(j, k)).sum();
            let zoff = z + off;
            let y = if usize::from(label) == k { 1.0 } else { 0.0 };
            total += zoff - zoff * y - 0.5 * z.abs() - 0.125 * z * z;
        }
    }
    total
}

/// Gradients of [`classifier_objective`] for every classifier layer, treating
/// the encoder code as input data.
///
/// Output layer: `d/dW[j][k] = sum_r [ (h_pi[j] + chi3[j]/n)(1 - y_rk)
/// - (sgn(z_rk)/2 + z_rk/4) h_pi[j] ]`; hidden layers by backpropagation
/// through tanh.
pub fn classifier_gradient(
    params: &ModelParams,
    acts: &EncoderActivations,
    cacts: &ClassifierActivations,
    labels: &[u16],
    noise: &NoiseBundle,
    n: usize,
) -> Vec<Matrix> {
    let n_layers = params.classifier.len();
    let n_hidden = n_layers - 1;
    let out = params.output_layer();
    let k_count = out.cols();
    let scale = 1.0 / n as f64;

    let mut grads: Vec<Matrix> = params
        .classifier
        .iter()
        .map(|m| Matrix::zeros(m.rows(), m.cols()))
        .collect();

    for (r, &label) in labels.iter().enumerate() {
        let h_pi = cacts.h_pi(r);
        // Coefficients c_rk = (1 - y_rk) - sgn(z_rk)/2 - z_rk/4 drive both the
        // output-layer gradient and the backpropagated signal.
        let mut coeff = vec![0.0; k_count];
        for k in 0..k_count {
            let z = cacts.logits[r][k];
            let y = if usize::from(label) == k { 1.0 } else { 0.0 };
            coeff[k] = (1.0 - y) - 0.5 * z.signum() - 0.25 * z;
        }

        // Output layer gradient; the noise offset rides only on the
        // first-order (1 - y) part.
        {
            let g = &mut grads[n_layers - 1];
            for j in 0..h_pi.len() {
                let noisy = noise.label_noise[j] * scale;
                let grow = g.row_mut(j);
                for k in 0..k_count {
                    let z = cacts.logits[r][k];
                    let y = if usize::from(label) == k { 1.0 } else { 0.0 };
                    grow[k] += (h_pi[j] + noisy) * (1.0 - y)
                        - (0.5 * z.signum() + 0.25 * z) * h_pi[j];
                }
            }
        }

        // Backpropagate delta = d obj / d activation through the hidden stack.
        let mut delta = vec![0.0; h_pi.len()];
        out.apply(&coeff, &mut delta);
        for l in (0..n_hidden).rev() {
            let activation = &cacts.hidden[r][l];
            // through tanh
            let pre_delta: Vec<f64> = delta
                .iter()
                .zip(activation)
                .map(|(dv, av)| dv * (1.0 - av * av))
                .collect();
            let input: &[f64] = if l == 0 { &acts.hbar[r] } else { &cacts.hidden[r][l - 1] };
            let g = &mut grads[l];
            for i in 0..input.len() {
                let xi = input[i];
                let grow = g.row_mut(i);
                for j in 0..pre_delta.len() {
                    grow[j] += xi * pre_delta[j];
                }
            }
            if l > 0 {
                let mut next = vec![0.0; params.classifier[l].rows()];
                params.classifier[l].apply(&pre_delta, &mut next);
                delta = next;
            }
        }
    }
    grads
}

/// Both losses and all gradients for one batch, flattened-ready.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub encoder: Matrix,
    pub classifier: Vec<Matrix>,
    pub loss_reconstruction: f64,
    pub loss_classifier: f64,
}

/// One full gradient computation: encode, classify, evaluate both perturbed
/// objectives and their gradients.
pub fn batch_gradients(
    params: &ModelParams,
    batch: &BatchView<'_>,
    noise: &NoiseBundle,
) -> Result<BatchGradients> {
    let acts = encode_batch(params, batch, noise)?;
    let cacts = classifier_forward(params, &acts)?;
    let loss_reconstruction = reconstruction_objective(&params.encoder, batch, &acts);
    let loss_classifier = classifier_objective(params, &cacts, &batch.labels, noise, batch.n);
    let encoder =
        reconstruction_gradient(batch, &acts, params.encoder.rows(), params.encoder.cols());
    let classifier =
        classifier_gradient(params, &acts, &cacts, &batch.labels, noise, batch.n);
    Ok(BatchGradients { encoder, classifier, loss_reconstruction, loss_classifier })
}

/// Concatenate (encoder, classifier layers) into one update vector.
pub fn flatten_gradients(g: &BatchGradients) -> Vec<f64> {
    let mut flat = Vec::with_capacity(
        g.encoder.data().len() + g.classifier.iter().map(|m| m.data().len()).sum::<usize>(),
    );
    flat.extend_from_slice(g.encoder.data());
    for m in &g.classifier {
        flat.extend_from_slice(m.data());
    }
    flat
}

/// `params <- params - lr * flat`, then re-clip the encoder columns.
pub fn apply_step(
    params: &mut ModelParams,
    flat: &[f64],
    learning_rate: f64,
    encoder_column_bound: f64,
) -> Result<()> {
    let expected: usize = params.encoder.data().len()
        + params.classifier.iter().map(|m| m.data().len()).sum::<usize>();
    if flat.len() != expected {
        return Err(Error::Shape(format!(
            "update vector has {} entries, parameters have {expected}",
            flat.len()
        )));
    }
    let mut offset = 0;
    for (dst, src) in params.encoder.data_mut().iter_mut().zip(&flat[offset..]) {
        *dst -= learning_rate * src;
    }
    offset += params.encoder.data().len();
    for m in &mut params.classifier {
        let len = m.data().len();
        for (dst, src) in m.data_mut().iter_mut().zip(&flat[offset..offset + len]) {
            *dst -= learning_rate * src;
        }
        offset += len;
    }
    params.encoder.clip_columns_l1(encoder_column_bound);
    if !params.encoder.is_finite() || params.classifier.iter().any(|m| !m.is_finite()) {
        return Err(Error::Numeric("non-finite parameter after descent step".into()));
    }
    Ok(())
}

/// Fingerprint of the full parameter state, for release audit trails.
pub fn params_fingerprint(params: &ModelParams) -> u64 {
    let mut parts: Vec<&[f64]> = vec![params.encoder.data()];
    for m in &params.classifier {
        parts.push(m.data());
    }
    hash_f64s(parts)
}

// --- checkpoint serialization -------------------------------------------------
//
// Format `L2CK` v1: all integers u32 little-endian, all weights f64
// little-endian, row-major. Layout:
//   magic "L2CK" | version u32 | marker "LE64" | d | h1 | n_hidden |
//   hidden widths... | k | encoder data | classifier matrices in order

const CHECKPOINT_MAGIC: &[u8; 4] = b"L2CK";
const CHECKPOINT_MARKER: &[u8; 4] = b"LE64";
const CHECKPOINT_VERSION: u32 = 1;

/// Write a checkpoint.
pub fn save_checkpoint(path: &Path, shape: &ModelShape, params: &ModelParams) -> Result<()> {
    if !params.matches_shape(shape) {
        return Err(Error::Shape("parameters do not match the declared shape".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(CHECKPOINT_MARKER)?;
    w.write_all(&(shape.d as u32).to_le_bytes())?;
    w.write_all(&(shape.h1_size as u32).to_le_bytes())?;
    w.write_all(&(shape.hidden_sizes.len() as u32).to_le_bytes())?;
    for &h in &shape.hidden_sizes {
        w.write_all(&(h as u32).to_le_bytes())?;
    }
    w.write_all(&(shape.k as u32).to_le_bytes())?;
    for v in params.encoder.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for m in &params.classifier {
        for v in m.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a checkpoint back.
pub fn load_checkpoint(path: &Path) -> Result<(ModelShape, ModelParams)> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut marker = [0u8; 4];
    r.read_exact(&mut marker)?;
    if &marker != CHECKPOINT_MARKER {
        return Err(Error::Format("unsupported float encoding marker".into()));
    }
    let d = read_u32(&mut r)? as usize;
    let h1 = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    let mut hidden_sizes = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden_sizes.push(read_u32(&mut r)? as usize);
    }
    let k = read_u32(&mut r)? as usize;
    let shape = ModelShape::new(d, h1, hidden_sizes, k)
        .map_err(|e| Error::Format(format!("invalid checkpoint shape: {e}")))?;
    let encoder = Matrix::from_vec(d, h1, read_f64s(&mut r, d * h1)?)?;
    let mut classifier = Vec::with_capacity(shape.hidden_sizes.len() + 1);
    let mut prev = h1;
    for &w in &shape.hidden_sizes {
        classifier.push(Matrix::from_vec(prev, w, read_f64s(&mut r, prev * w)?)?);
        prev = w;
    }
    classifier.push(Matrix::from_vec(prev, k, read_f64s(&mut r, prev * k)?)?);
    Ok((shape, ModelParams { encoder, classifier }))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}
