//! Laplace sampling, sensitivity bounds, and privacy budget accounting.
//!
//! Two accountants live here. The lifelong accountant reports one fixed
//! budget `eps1 + eps1/gamma_x + eps1/gamma + eps2` that does not depend on
//! how many tasks are trained; the naive accountant composes per-task budgets
//! either by `max` (the parallel-composition shortcut, which undercounts once
//! released parameters make the mechanisms adaptive) or by `sum` (the
//! composition-consistent upper bound).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::hash_f64s;

/// Privacy parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyConfig {
    /// Budget share spent on perturbing the reconstruction objective and its
    /// input/hidden coefficients.
    pub eps1: f64,
    /// Budget share spent on perturbing the output-layer objective.
    pub eps2: f64,
    /// Broken probability. Zero for the Laplace mechanism; the Gaussian
    /// baseline carries its own.
    pub delta: f64,
    /// Hard cap on the 1-norm of every encoder weight column, enforced after
    /// each descent step so the budget is a constant of the run.
    pub encoder_column_bound: f64,
}

impl PrivacyConfig {
    pub fn new(eps1: f64, eps2: f64, delta: f64, encoder_column_bound: f64) -> Result<Self> {
        if !(eps1 > 0.0) {
            return Err(Error::Parameter(format!("eps1 must be > 0, got {eps1}")));
        }
        if !(eps2 > 0.0) {
            return Err(Error::Parameter(format!("eps2 must be > 0, got {eps2}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parameter(format!("delta must be in [0,1), got {delta}")));
        }
        if !(encoder_column_bound > 0.0) {
            return Err(Error::Parameter(format!(
                "encoder column bound must be > 0, got {encoder_column_bound}"
            )));
        }
        Ok(PrivacyConfig { eps1, eps2, delta, encoder_column_bound })
    }
}

/// The single Laplace draw of a training run.
///
/// All three vectors are drawn once before task 1 and reused, divided by the
/// perturbation denominator, across every batch, epoch, and task. Re-drawing
/// would turn one mechanism application into many and break the fixed budget.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    /// Added (scaled) to every input vector; length = input dimension.
    pub input_noise: Vec<f64>,
    /// Added (scaled, doubled) to the encoder hidden layer; length = encoder width.
    pub hidden_noise: Vec<f64>,
    /// Added (scaled) to the first-order classifier coefficients; length = last hidden width.
    pub label_noise: Vec<f64>,
}

impl NoiseBundle {
    /// Draw the run's noise once.
    ///
    /// Scales are `delta_r / eps1` for the input and hidden vectors and
    /// `delta_l / eps2` for the label vector.
    pub fn draw(
        sens: &SensitivityReport,
        cfg: &PrivacyConfig,
        d: usize,
        h1_size: usize,
        h_pi_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let input_noise = laplace_sample(sens.delta_r / cfg.eps1, d, rng)?;
        let hidden_noise = laplace_sample(sens.delta_r / cfg.eps1, h1_size, rng)?;
        let label_noise = laplace_sample(sens.delta_l / cfg.eps2, h_pi_size, rng)?;
        Ok(NoiseBundle { input_noise, hidden_noise, label_noise })
    }

    /// All-zero bundle for noiseless mechanisms. Same code path, no perturbation.
    pub fn zeros(d: usize, h1_size: usize, h_pi_size: usize) -> Self {
        NoiseBundle {
            input_noise: vec![0.0; d],
            hidden_noise: vec![0.0; h1_size],
            label_noise: vec![0.0; h_pi_size],
        }
    }

    /// Audit fingerprint; constant across a run by construction.
    pub fn fingerprint(&self) -> u64 {
        hash_f64s([
            self.input_noise.as_slice(),
            self.hidden_noise.as_slice(),
            self.label_noise.as_slice(),
        ])
    }
}

/// Global sensitivities and the derived budget scaling factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    /// Sensitivity of the reconstruction objective: `d * (h1_size + 2)`.
    pub delta_r: f64,
    /// Sensitivity of the classifier objective: `2 * h_pi_size`.
    pub delta_l: f64,
    /// Input-level scaling factor `delta_r / n`.
    pub gamma_x: f64,
    /// Hidden-level scaling factor `2 * delta_r / (n * bound)`.
    pub gamma: f64,
}

/// Compute the sensitivity bounds for a model shape and perturbation
/// denominator `n` (the dataset size when whole tasks are perturbed, the
/// batch size under streaming batch training).
pub fn compute_sensitivities(
    d: usize,
    h1_size: usize,
    h_pi_size: usize,
    n: usize,
    cfg: &PrivacyConfig,
) -> Result<SensitivityReport> {
    if d == 0 || h1_size == 0 || h_pi_size == 0 {
        return Err(Error::Parameter("model dimensions must all be >= 1".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("perturbation denominator must be >= 1".into()));
    }
    let delta_r = (d as f64) * (h1_size as f64 + 2.0);
    let delta_l = 2.0 * h_pi_size as f64;
    let gamma_x = delta_r / n as f64;
    let gamma = 2.0 * gamma_x / cfg.encoder_column_bound;
    Ok(SensitivityReport { delta_r, delta_l, gamma_x, gamma })
}

/// Which accountant produced a budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetRegime {
    /// Fixed budget, independent of the task count.
    Lifelong,
    /// `max` over per-task budgets (parallel-composition shortcut).
    NaiveMax,
    /// `sum` over per-task budgets (composition-consistent upper bound).
    NaiveSum,
}

impl BudgetRegime {
    pub fn as_str(self) -> &'static str {
        match self {
            BudgetRegime::Lifelong => "lifelong",
            BudgetRegime::NaiveMax => "naive-max",
            BudgetRegime::NaiveSum => "naive-sum",
        }
    }
}

/// A composed privacy budget with its component breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    pub total_epsilon: f64,
    /// `(eps1, eps1/gamma_x, eps1/gamma, eps2)`; zero for naive regimes.
    pub per_component: [f64; 4],
    pub delta: f64,
    pub regime: BudgetRegime,
    pub task_count: usize,
}

impl BudgetReport {
    /// CSV header matching [`BudgetReport::csv_row`].
    pub const CSV_HEADER: &'static str =
        "total_epsilon,eps1,eps1_over_gamma_x,eps1_over_gamma,eps2,delta,regime,task_count";

    /// One flat CSV row of the report.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.total_epsilon,
            self.per_component[0],
            self.per_component[1],
            self.per_component[2],
            self.per_component[3],
            self.delta,
            self.regime.as_str(),
            self.task_count
        )
    }
}

/// The fixed lifelong budget: `eps1 + eps1/gamma_x + eps1/gamma + eps2`.
///
/// `task_count` is carried through for reporting only; the total is the same
/// for every `task_count >= 1`.
pub fn lifelong_budget(
    sens: &SensitivityReport,
    cfg: &PrivacyConfig,
    task_count: usize,
) -> Result<BudgetReport> {
    if task_count == 0 {
        return Err(Error::Parameter("task_count must be >= 1".into()));
    }
    let per_component = [
        cfg.eps1,
        cfg.eps1 / sens.gamma_x,
        cfg.eps1 / sens.gamma,
        cfg.eps2,
    ];
    let total_epsilon = per_component.iter().sum();
    Ok(BudgetReport {
        total_epsilon,
        per_component,
        delta: cfg.delta,
        regime: BudgetRegime::Lifelong,
        task_count,
    })
}

/// How the naive accountant composes per-task budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveMode {
    /// `max_i (eps_data_i + eps_memory_i)` — valid only when tasks are
    /// non-adaptive, which released per-task parameters violate.
    Max,
    /// `sum_i (eps_data_i + eps_memory_i)` — the accumulation-consistent bound.
    Sum,
}

/// Compose per-task `(eps_data, eps_memory)` budgets.
pub fn naive_budget(per_task: &[(f64, f64)], mode: NaiveMode, delta: f64) -> Result<BudgetReport> {
    if per_task.is_empty() {
        return Err(Error::Parameter("naive budget needs at least one task".into()));
    }
    for (i, (ed, em)) in per_task.iter().enumerate() {
        if *ed < 0.0 || *em < 0.0 {
            return Err(Error::Parameter(format!(
                "task {i} has negative budget ({ed}, {em})"
            )));
        }
    }
    let combined = per_task.iter().map(|(ed, em)| ed + em);
    let (total_epsilon, regime) = match mode {
        NaiveMode::Max => (combined.fold(f64::NEG_INFINITY, f64::max), BudgetRegime::NaiveMax),
        NaiveMode::Sum => (combined.sum(), BudgetRegime::NaiveSum),
    };
    Ok(BudgetReport {
        total_epsilon,
        per_component: [0.0; 4],
        delta,
        regime,
        task_count: per_task.len(),
    })
}

/// Grid-search winners for the Gaussian gradient-noise baseline:
/// target epsilon mapped to `(noise_scale z, clipping_bound C)`.
pub const GAUSSIAN_GRID: [(f64, f64, f64); 3] =
    [(4.0, 2.2, 0.01), (7.0, 1.7, 0.01), (10.0, 1.4, 0.01)];

/// Look up `(z, C)` for a target epsilon, or pass an explicit override through.
pub fn gaussian_baseline_config(
    target_epsilon: f64,
    override_zc: Option<(f64, f64)>,
) -> Result<(f64, f64)> {
    if let Some((z, c)) = override_zc {
        if !(z > 0.0) || !(c > 0.0) {
            return Err(Error::Parameter(format!(
                "override (z, C) must be positive, got ({z}, {c})"
            )));
        }
        return Ok((z, c));
    }
    GAUSSIAN_GRID
        .iter()
        .find(|(eps, _, _)| *eps == target_epsilon)
        .map(|(_, z, c)| (*z, *c))
        .ok_or_else(|| {
            Error::Config(format!(
                "no (z, C) mapping for epsilon = {target_epsilon}; supply an explicit override"
            ))
        })
}

/// Draw `count` i.i.d. zero-mean Laplace samples with scale `b`.
///
/// Inverse-CDF transform of uniform(-1/2, 1/2): `x = -b * sgn(u) * ln(1 - 2|u|)`.
pub fn laplace_sample(scale: f64, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(scale > 0.0) {
        return Err(Error::Parameter(format!("laplace scale must be > 0, got {scale}")));
    }
    if count == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    Ok((0..count).map(|_| laplace_one(scale, rng)).collect())
}

#[inline]
fn laplace_one(scale: f64, rng: &mut ChaCha8Rng) -> f64 {
    // u in (-1/2, 1/2); gen_range excludes the upper bound and 1-2|u| > 0
    // is guaranteed by nextafter-ing away from -1/2 when hit exactly.
    let mut u: f64 = rng.gen_range(-0.5..0.5);
    if u == -0.5 {
        u = -0.5 + f64::EPSILON;
    }
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Laplace CDF with scale `b`, for goodness-of-fit checks.
pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn cfg(eps1: f64, eps2: f64, bound: f64) -> PrivacyConfig {
        PrivacyConfig::new(eps1, eps2, 0.0, bound).unwrap()
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream_rng(7, Stream::Noise);
        let xs = laplace_sample(1.0, 1_000_000, &mut rng).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        // Var = 2b^2 within 5%
        assert!((var - 2.0).abs() < 0.1, "variance {var}");

        let mut rng = stream_rng(8, Stream::Noise);
        let xs = laplace_sample(0.5, 1_000_000, &mut rng).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn laplace_is_deterministic_given_seed() {
        let mut a = stream_rng(5, Stream::Noise);
        let mut b = stream_rng(5, Stream::Noise);
        assert_eq!(
            laplace_sample(1.0, 5, &mut a).unwrap(),
            laplace_sample(1.0, 5, &mut b).unwrap()
        );
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = stream_rng(1, Stream::Noise);
        assert!(matches!(laplace_sample(0.0, 3, &mut rng), Err(Error::Parameter(_))));
        assert!(matches!(laplace_sample(-1.0, 3, &mut rng), Err(Error::Parameter(_))));
    }

    #[test]
    fn sensitivities_match_hand_arithmetic() {
        let c = cfg(0.1, 0.1, 1.0);
        let s = compute_sensitivities(4, 3, 5, 100, &c).unwrap();
        assert_eq!(s.delta_r, 20.0);
        assert_eq!(s.delta_l, 10.0);
        assert_eq!(s.gamma_x, 0.2);
        assert_eq!(s.gamma, 0.4);

        let s = compute_sensitivities(1, 1, 1, 1, &c).unwrap();
        assert_eq!(s.delta_r, 3.0);
        assert_eq!(s.delta_l, 2.0);
        assert_eq!(s.gamma_x, 3.0);
        assert_eq!(s.gamma, 6.0);

        // larger instance, recomputed by hand: 784*130 = 101920; /128 = 796.25
        let s = compute_sensitivities(784, 128, 128, 128, &c).unwrap();
        assert_eq!(s.delta_r, 101_920.0);
        assert_eq!(s.gamma_x, 796.25);
    }

    #[test]
    fn sensitivities_reject_zero_dims() {
        let c = cfg(0.1, 0.1, 1.0);
        assert!(compute_sensitivities(0, 1, 1, 1, &c).is_err());
        assert!(compute_sensitivities(1, 0, 1, 1, &c).is_err());
        assert!(compute_sensitivities(1, 1, 0, 1, &c).is_err());
        assert!(compute_sensitivities(1, 1, 1, 0, &c).is_err());
    }

    #[test]
    fn gamma_identity_holds_exactly() {
        let c = cfg(0.3, 0.2, 0.7);
        let s = compute_sensitivities(13, 5, 9, 37, &c).unwrap();
        assert_eq!(s.gamma, 2.0 * s.gamma_x / c.encoder_column_bound);
    }

    #[test]
    fn lifelong_budget_worked_example() {
        let c = cfg(0.1, 0.1, 1.0);
        let s = compute_sensitivities(4, 3, 5, 100, &c).unwrap();
        let b = lifelong_budget(&s, &c, 5).unwrap();
        assert_eq!(b.per_component, [0.1, 0.5, 0.25, 0.1]);
        assert!((b.total_epsilon - 0.95).abs() < 1e-15);
        assert_eq!(b.regime, BudgetRegime::Lifelong);
        // breakdown sums to the total exactly (computed as that sum)
        assert_eq!(b.per_component.iter().sum::<f64>(), b.total_epsilon);
    }

    #[test]
    fn lifelong_budget_is_bit_identical_across_task_counts() {
        let c = cfg(0.1, 0.1, 1.0);
        let s = compute_sensitivities(4, 3, 5, 100, &c).unwrap();
        let b5 = lifelong_budget(&s, &c, 5).unwrap();
        for m in [1usize, 2, 50] {
            let bm = lifelong_budget(&s, &c, m).unwrap();
            assert_eq!(bm.total_epsilon.to_bits(), b5.total_epsilon.to_bits());
            assert_eq!(bm.per_component, b5.per_component);
        }
    }

    #[test]
    fn config_rejects_non_positive_eps() {
        assert!(PrivacyConfig::new(0.0, 0.1, 0.0, 1.0).is_err());
        assert!(PrivacyConfig::new(0.1, 0.0, 0.0, 1.0).is_err());
        assert!(PrivacyConfig::new(0.1, 0.1, 1.0, 1.0).is_err());
        assert!(PrivacyConfig::new(0.1, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn naive_budget_modes() {
        let tasks = vec![(0.3, 0.2); 5];
        let sum = naive_budget(&tasks, NaiveMode::Sum, 1e-5).unwrap();
        assert!((sum.total_epsilon - 2.5).abs() < 1e-12);
        assert_eq!(sum.regime, BudgetRegime::NaiveSum);

        let max = naive_budget(&tasks, NaiveMode::Max, 1e-5).unwrap();
        assert!((max.total_epsilon - 0.5).abs() < 1e-12);

        let one = vec![(0.4, 0.0)];
        assert_eq!(naive_budget(&one, NaiveMode::Sum, 0.0).unwrap().total_epsilon, 0.4);
        assert_eq!(naive_budget(&one, NaiveMode::Max, 0.0).unwrap().total_epsilon, 0.4);

        assert!(matches!(naive_budget(&[], NaiveMode::Sum, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn naive_sum_grows_with_appended_tasks() {
        let mut tasks = vec![(0.3, 0.2)];
        let mut prev = naive_budget(&tasks, NaiveMode::Sum, 0.0).unwrap().total_epsilon;
        for _ in 0..6 {
            tasks.push((0.3, 0.2));
            let next = naive_budget(&tasks, NaiveMode::Sum, 0.0).unwrap().total_epsilon;
            assert!(next > prev);
            prev = next;
        }
    }

    #[test]
    fn gaussian_mapping_and_override() {
        assert_eq!(gaussian_baseline_config(4.0, None).unwrap(), (2.2, 0.01));
        assert_eq!(gaussian_baseline_config(7.0, None).unwrap(), (1.7, 0.01));
        assert_eq!(gaussian_baseline_config(10.0, None).unwrap(), (1.4, 0.01));
        assert_eq!(gaussian_baseline_config(5.0, Some((2.0, 0.1))).unwrap(), (2.0, 0.1));
        assert!(matches!(gaussian_baseline_config(5.0, None), Err(Error::Config(_))));
    }

    #[test]
    fn budget_csv_row_is_flat() {
        let c = cfg(0.1, 0.1, 1.0);
        let s = compute_sensitivities(4, 3, 5, 100, &c).unwrap();
        let b = lifelong_budget(&s, &c, 3).unwrap();
        let row = b.csv_row();
        assert!(row.ends_with(",lifelong,3"));
        assert_eq!(row.split(',').count(), BudgetReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn noise_bundle_shapes_and_fingerprint() {
        let c = cfg(0.5, 0.5, 1.0);
        let s = compute_sensitivities(4, 3, 5, 10, &c).unwrap();
        let mut rng = stream_rng(3, Stream::Noise);
        let nb = NoiseBundle::draw(&s, &c, 4, 3, 5, &mut rng).unwrap();
        assert_eq!(nb.input_noise.len(), 4);
        assert_eq!(nb.hidden_noise.len(), 3);
        assert_eq!(nb.label_noise.len(), 5);
        assert_eq!(nb.fingerprint(), nb.clone().fingerprint());
        let zero = NoiseBundle::zeros(4, 3, 5);
        assert_ne!(nb.fingerprint(), zero.fingerprint());
    }
}
