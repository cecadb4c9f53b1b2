//! Continual-learning metrics and significance testing.
//!
//! The accuracy matrix records `a[tau][t]`: accuracy on task `t`'s test set
//! after finishing task `tau` (end-of-task checkpoints). From it come average
//! accuracy, average forgetting, and two-tailed Welch t-test p-value curves
//! between running-average-accuracy sequences.

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams};
use crate::privacy::NoiseBundle;

/// An `m x m` matrix of per-task accuracies; entries for tasks not yet
/// evaluated are `None`. Row and column indices are 0-based task indices.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    entries: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(m: usize) -> Self {
        AccuracyMatrix { entries: vec![vec![None; m]; m] }
    }

    pub fn task_count(&self) -> usize {
        self.entries.len()
    }

    pub fn set(&mut self, tau: usize, t: usize, accuracy: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::Parameter(format!("accuracy {accuracy} outside [0, 1]")));
        }
        self.entries[tau][t] = Some(accuracy);
        Ok(())
    }

    pub fn get(&self, tau: usize, t: usize) -> Option<f64> {
        self.entries[tau][t]
    }

    /// CSV with one row per checkpoint; unavailable entries are empty fields.
    pub fn to_csv(&self) -> String {
        let m = self.task_count();
        let header: Vec<String> = (0..m).map(|t| format!("task_{t}")).collect();
        let mut out = format!("tau,{}\n", header.join(","));
        for tau in 0..m {
            let cells: Vec<String> = (0..m)
                .map(|t| self.entries[tau][t].map(|a| a.to_string()).unwrap_or_default())
                .collect();
            out.push_str(&format!("{tau},{}\n", cells.join(",")));
        }
        out
    }

    /// Parse the output of [`AccuracyMatrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty matrix CSV".into()))?;
        let m = header.split(',').count() - 1;
        let mut matrix = AccuracyMatrix::new(m);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let tau: usize = fields
                .next()
                .ok_or_else(|| Error::Format("missing tau field".into()))?
                .parse()
                .map_err(|e| Error::Format(format!("bad tau: {e}")))?;
            for (t, field) in fields.enumerate() {
                if field.is_empty() {
                    continue;
                }
                let v: f64 =
                    field.parse().map_err(|e| Error::Format(format!("bad accuracy: {e}")))?;
                matrix.set(tau, t, v)?;
            }
        }
        Ok(matrix)
    }
}

/// Fraction of test examples predicted correctly.
pub fn accuracy_on(
    params: &ModelParams,
    test: &TaskDataset,
    noise: &NoiseBundle,
    n: usize,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Parameter("empty test set".into()));
    }
    let mut correct = 0usize;
    for r in 0..test.len() {
        let predicted = predict(params, test.inputs().row(r), noise, n)?;
        if predicted == usize::from(test.labels()[r]) {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Evaluate every released checkpoint on every task's test set.
pub fn evaluate_released(
    released: &[ModelParams],
    tests: &[&TaskDataset],
    noise: &NoiseBundle,
    n: usize,
) -> Result<AccuracyMatrix> {
    let m = released.len();
    if tests.len() != m {
        return Err(Error::Parameter(format!(
            "{m} checkpoints but {} test sets",
            tests.len()
        )));
    }
    let mut matrix = AccuracyMatrix::new(m);
    for (tau, params) in released.iter().enumerate() {
        for (t, test) in tests.iter().enumerate() {
            matrix.set(tau, t, accuracy_on(params, test, noise, n)?)?;
        }
    }
    Ok(matrix)
}

/// Mean accuracy over tasks `1..=tau` after finishing task `tau`
/// (0-based `tau`, averaging entries `a[tau][0..=tau]`).
pub fn average_accuracy(matrix: &AccuracyMatrix, tau: usize) -> Result<f64> {
    if tau >= matrix.task_count() {
        return Err(Error::Parameter(format!("tau {tau} out of range")));
    }
    let mut sum = 0.0;
    for t in 0..=tau {
        sum += matrix.get(tau, t).ok_or_else(|| {
            Error::Usage(format!("entry ({tau}, {t}) not populated"))
        })?;
    }
    Ok(sum / (tau + 1) as f64)
}

/// Mean over earlier tasks of the worst accuracy drop relative to any earlier
/// checkpoint: `f_t = max_{l < tau} (a[l][t] - a[tau][t])`, averaged over
/// `t < tau`. Unpopulated `a[l][t]` entries are skipped; each task needs at
/// least one populated earlier checkpoint.
pub fn average_forgetting(matrix: &AccuracyMatrix, tau: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::Usage("forgetting is undefined after the first task".into()));
    }
    if tau >= matrix.task_count() {
        return Err(Error::Parameter(format!("tau {tau} out of range")));
    }
    let mut sum = 0.0;
    for t in 0..tau {
        let current = matrix
            .get(tau, t)
            .ok_or_else(|| Error::Usage(format!("entry ({tau}, {t}) not populated")))?;
        let mut worst: Option<f64> = None;
        for l in 0..tau {
            if let Some(past) = matrix.get(l, t) {
                let drop = past - current;
                worst = Some(worst.map_or(drop, |w: f64| w.max(drop)));
            }
        }
        sum += worst.ok_or_else(|| {
            Error::Usage(format!("no earlier checkpoint evaluated on task {t}"))
        })?;
    }
    Ok(sum / tau as f64)
}

/// Running-average-accuracy curve `{average_accuracy(i)}` for `i in 0..=tau`.
pub fn running_average_curve(matrix: &AccuracyMatrix, tau: usize) -> Result<Vec<f64>> {
    (0..=tau).map(|i| average_accuracy(matrix, i)).collect()
}

/// Two-tailed Welch p-values between prefixes of two curves.
///
/// Entry `i` (0-based) compares `curve_a[..=i]` with `curve_b[..=i]`; prefixes
/// of length < 2 have no variance estimate and come back as `None`. When both
/// prefixes are constant the convention is `p = 1` for equal means and
/// `p = 0` otherwise.
pub fn pvalue_curve(curve_a: &[f64], curve_b: &[f64]) -> Result<Vec<Option<f64>>> {
    if curve_a.len() != curve_b.len() {
        return Err(Error::Parameter(format!(
            "curves have different lengths ({} vs {})",
            curve_a.len(),
            curve_b.len()
        )));
    }
    Ok((0..curve_a.len())
        .map(|i| {
            if i < 1 {
                None
            } else {
                Some(welch_two_tailed_pvalue(&curve_a[..=i], &curve_b[..=i]))
            }
        })
        .collect())
}

/// Two-sample two-tailed Welch t-test p-value.
pub fn welch_two_tailed_pvalue(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let var_a = a.iter().map(|x| (x - mean_a).powi(2)).sum::<f64>() / (na - 1.0);
    let var_b = b.iter().map(|x| (x - mean_b).powi(2)).sum::<f64>() / (nb - 1.0);
    let se2 = var_a / na + var_b / nb;
    if se2 == 0.0 {
        // zero pooled variance: identical constants mean p = 1, separated
        // constants are maximally significant
        return if mean_a == mean_b { 1.0 } else { 0.0 };
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    // Welch–Satterthwaite degrees of freedom
    let df = se2 * se2
        / ((var_a / na).powi(2) / (na - 1.0) + (var_b / nb).powi(2) / (nb - 1.0));
    student_t_two_tailed(t.abs(), df)
}

/// `P(|T| >= t)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function: `I_x(df/2, 1/2)` at
/// `x = df / (df + t^2)`.
pub fn student_t_two_tailed(t_abs: f64, df: f64) -> f64 {
    if !t_abs.is_finite() || !df.is_finite() || df <= 0.0 {
        return f64::NAN;
    }
    if t_abs == 0.0 {
        return 1.0;
    }
    let x = df / (df + t_abs * t_abs);
    regularized_incomplete_beta(0.5 * df, 0.5, x)
}

/// Regularized incomplete beta `I_x(a, b)` by the Lentz continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    // the continued fraction converges fastest for x < (a+1)/(a+b+2);
    // otherwise evaluate the mirrored fraction and use I_x(a,b) = 1 - I_{1-x}(b,a)
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of `ln(Gamma(x))` for positive `x`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::{stream_rng, Stream};

    fn full_matrix(values: &[&[f64]]) -> AccuracyMatrix {
        let m = values.len();
        let mut matrix = AccuracyMatrix::new(m);
        for (tau, row) in values.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                matrix.set(tau, t, v).unwrap();
            }
        }
        matrix
    }

    #[test]
    fn average_accuracy_hand_cases() {
        let m = full_matrix(&[&[0.9, 0.1], &[0.7, 0.8]]);
        assert_eq!(average_accuracy(&m, 1).unwrap(), 0.75);
        assert_eq!(average_accuracy(&m, 0).unwrap(), 0.9);
    }

    #[test]
    fn average_accuracy_rejects_incomplete_rows() {
        let mut m = AccuracyMatrix::new(2);
        m.set(1, 0, 0.5).unwrap();
        assert!(matches!(average_accuracy(&m, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn forgetting_hand_case() {
        // a[0][0]=0.9, a[1][0]=0.7 -> f = 0.2
        let m = full_matrix(&[&[0.9, 0.0], &[0.7, 0.6]]);
        assert_eq!(average_forgetting(&m, 1).unwrap(), 0.2);
        assert!(matches!(average_forgetting(&m, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn forgetting_non_positive_for_improving_tasks() {
        let m = full_matrix(&[&[0.5, 0.0, 0.0], &[0.6, 0.4, 0.0], &[0.7, 0.5, 0.3]]);
        // task accuracies only improve: every drop is <= 0
        assert!(average_forgetting(&m, 2).unwrap() <= 0.0);
    }

    fn brute_force_average(matrix: &AccuracyMatrix, tau: usize) -> f64 {
        let mut sum = 0.0;
        for t in 0..=tau {
            sum += matrix.get(tau, t).unwrap();
        }
        sum / (tau + 1) as f64
    }

    fn brute_force_forgetting(matrix: &AccuracyMatrix, tau: usize) -> f64 {
        let mut sum = 0.0;
        for t in 0..tau {
            let mut worst = f64::NEG_INFINITY;
            for l in 0..tau {
                let drop = matrix.get(l, t).unwrap() - matrix.get(tau, t).unwrap();
                if drop > worst {
                    worst = drop;
                }
            }
            sum += worst;
        }
        sum / tau as f64
    }

    #[test]
    fn metrics_match_brute_force_oracles_exactly() {
        let mut rng = stream_rng(31, Stream::Data);
        for _ in 0..100 {
            let mut matrix = AccuracyMatrix::new(6);
            for tau in 0..6 {
                for t in 0..6 {
                    matrix.set(tau, t, rng.gen_range(0.0..1.0)).unwrap();
                }
            }
            for tau in 0..6 {
                let got = average_accuracy(&matrix, tau).unwrap();
                assert_eq!(got.to_bits(), brute_force_average(&matrix, tau).to_bits());
                if tau >= 1 {
                    let got = average_forgetting(&matrix, tau).unwrap();
                    assert_eq!(got.to_bits(), brute_force_forgetting(&matrix, tau).to_bits());
                }
            }
        }
    }

    #[test]
    fn identical_curves_give_p_one() {
        let curve = vec![0.3, 0.5, 0.6, 0.7];
        let ps = pvalue_curve(&curve, &curve).unwrap();
        assert!(ps[0].is_none());
        for p in ps.into_iter().flatten() {
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn separated_constant_curves_give_p_zero() {
        let ps = pvalue_curve(&[0.0, 0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        for p in ps.into_iter().flatten() {
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn pvalue_curve_is_symmetric() {
        let mut rng = stream_rng(17, Stream::Data);
        let a: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
        let ab = pvalue_curve(&a, &b).unwrap();
        let ba = pvalue_curve(&b, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn pvalues_match_reference_t_cdf() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let mut rng = stream_rng(23, Stream::Data);
        for _ in 0..200 {
            let n = rng.gen_range(2..12usize);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = welch_two_tailed_pvalue(&a, &b);

            // independent Welch computation against the statrs t CDF
            let (na, nb) = (n as f64, n as f64);
            let ma = a.iter().sum::<f64>() / na;
            let mb = b.iter().sum::<f64>() / nb;
            let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (na - 1.0);
            let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (nb - 1.0);
            let se2 = va / na + vb / nb;
            if se2 == 0.0 {
                continue;
            }
            let t = ((ma - mb) / se2.sqrt()).abs();
            let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            let want = 2.0 * (1.0 - dist.cdf(t));
            assert!((got - want).abs() < 1e-6, "p {got} vs reference {want} (t={t}, df={df})");
        }
    }

    #[test]
    fn t_cdf_known_values() {
        // symmetric: t=0 gives p=1
        assert_eq!(student_t_two_tailed(0.0, 5.0), 1.0);
        // df=1 (Cauchy): P(|T| >= 1) = 0.5
        assert!((student_t_two_tailed(1.0, 1.0) - 0.5).abs() < 1e-12);
        // large t drives p toward 0
        assert!(student_t_two_tailed(50.0, 10.0) < 1e-10);
    }

    #[test]
    fn matrix_csv_roundtrip() {
        let mut m = AccuracyMatrix::new(3);
        m.set(0, 0, 0.5).unwrap();
        m.set(1, 0, 0.25).unwrap();
        m.set(1, 1, 0.75).unwrap();
        m.set(2, 0, 0.1).unwrap();
        m.set(2, 1, 0.2).unwrap();
        m.set(2, 2, 0.3).unwrap();
        let csv = m.to_csv();
        let back = AccuracyMatrix::from_csv(&csv).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.get(0, 1), None);
    }
}
