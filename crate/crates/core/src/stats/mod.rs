//! Agreement statistics between metric scores and human judgments.
//!
//! p-values are two-sided. Pearson and Spearman use the t transform
//! `t = r·sqrt((n−2)/(1−r²))` with n−2 degrees of freedom; Kendall's tau-b
//! uses the normal approximation `z = S / sqrt(n(n−1)(2n+5)/18)` where S is
//! concordant minus discordant pairs.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} paired samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{0} series is constant; correlation is undefined")]
    ConstantSeries(&'static str),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// Metric scores `xs` paired with human scores `ys`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSamples {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PairedSamples {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, StatsError> {
        if xs.len() != ys.len() {
            return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
        }
        if let Some(i) = xs.iter().zip(&ys).position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(StatsError::NonFinite(i));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    fn require(&self, needed: usize) -> Result<(), StatsError> {
        if self.n() < needed {
            return Err(StatsError::InsufficientSamples { needed, got: self.n() });
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// p-value for a correlation coefficient through the t transform.
fn t_test_p(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus = 1.0 - r * r;
    if one_minus <= 0.0 {
        return 0.0;
    }
    special::student_t_two_sided(r * (df / one_minus).sqrt(), df)
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantSeries("metric"));
    }
    if syy == 0.0 {
        return Err(StatsError::ConstantSeries("human"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Product-moment correlation and its two-sided p-value.
pub fn pearson(samples: &PairedSamples) -> Result<(f64, f64), StatsError> {
    samples.require(3)?;
    let r = pearson_r(&samples.xs, &samples.ys)?;
    Ok((r, t_test_p(r, samples.n())))
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(samples: &PairedSamples) -> Result<(f64, f64), StatsError> {
    samples.require(3)?;
    let rho = pearson_r(&average_ranks(&samples.xs), &average_ranks(&samples.ys))?;
    Ok((rho, t_test_p(rho, samples.n())))
}

fn tied_pairs(sorted_runs: impl Iterator<Item = usize>) -> u64 {
    sorted_runs.map(|t| (t as u64) * (t as u64 - 1) / 2).sum()
}

/// Lengths of runs of equal adjacent elements.
fn runs<T: PartialEq>(v: &[T]) -> impl Iterator<Item = usize> + '_ {
    let mut i = 0;
    std::iter::from_fn(move || {
        if i >= v.len() {
            return None;
        }
        let start = i;
        while i < v.len() && v[i] == v[start] {
            i += 1;
        }
        Some(i - start)
    })
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn sort_counting_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_inversions(&mut v[..mid]) + sort_counting_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            merged.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    swaps
}

/// Kendall's tau-b, computed in O(n log n), with the S statistic.
fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let pairs_x: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let joint: Vec<(f64, f64)> = order.iter().map(|&i| (xs[i], ys[i])).collect();
    let mut y_sorted: Vec<f64> = order.iter().map(|&i| ys[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let tx = tied_pairs(runs(&pairs_x));
    let txy = tied_pairs(runs(&joint));
    let discordant = sort_counting_inversions(&mut y_sorted);
    let ty = tied_pairs(runs(&y_sorted));

    if tx == n0 {
        return Err(StatsError::ConstantSeries("metric"));
    }
    if ty == n0 {
        return Err(StatsError::ConstantSeries("human"));
    }
    // concordant − discordant
    let s = n0 as f64 - tx as f64 - ty as f64 + txy as f64 - 2.0 * discordant as f64;
    let tau = s / (((n0 - tx) as f64).sqrt() * ((n0 - ty) as f64).sqrt());
    Ok((tau.clamp(-1.0, 1.0), s))
}

/// Kendall's tau-b and its normal-approximation p-value.
pub fn kendall(samples: &PairedSamples) -> Result<(f64, f64), StatsError> {
    samples.require(3)?;
    let (tau, s) = kendall_tau_b(&samples.xs, &samples.ys)?;
    let n = samples.n() as f64;
    let z = s / (n * (n - 1.0) * (2.0 * n + 5.0) / 18.0).sqrt();
    Ok((tau, special::normal_two_sided(z)))
}

pub fn mae(samples: &PairedSamples) -> f64 {
    mean(&samples.xs.iter().zip(&samples.ys).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
}

pub fn rmse(samples: &PairedSamples) -> f64 {
    let msd = mean(&samples.xs.iter().zip(&samples.ys).map(|(x, y)| (x - y) * (x - y)).collect::<Vec<_>>());
    // equal-magnitude deviations can round a hair below the mean absolute error
    msd.sqrt().max(mae(samples))
}

/// Euclidean norm of the deviations, `rmse·sqrt(n)`.
pub fn l2_deviation(samples: &PairedSamples) -> f64 {
    rmse(samples) * (samples.n() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub r_squared: f64,
}

pub fn error_stats(samples: &PairedSamples) -> Result<ErrorStats, StatsError> {
    let (r, _) = pearson(samples)?;
    Ok(ErrorStats { mae: mae(samples), rmse: rmse(samples), r_squared: r * r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub kendall_tau: f64,
    pub kendall_p: f64,
    pub r_squared: f64,
    pub mae: f64,
    pub rmse: f64,
    pub l2_deviation: f64,
}

pub fn correlation_report(samples: &PairedSamples) -> Result<CorrelationReport, StatsError> {
    let (pearson_r, pearson_p) = pearson(samples)?;
    let (spearman_rho, spearman_p) = spearman(samples)?;
    let (kendall_tau, kendall_p) = kendall(samples)?;
    Ok(CorrelationReport {
        n: samples.n(),
        pearson_r,
        pearson_p,
        spearman_rho,
        spearman_p,
        kendall_tau,
        kendall_p,
        r_squared: pearson_r * pearson_r,
        mae: mae(samples),
        rmse: rmse(samples),
        l2_deviation: l2_deviation(samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(xs: &[f64], ys: &[f64]) -> PairedSamples {
        PairedSamples::new(xs.to_vec(), ys.to_vec()).unwrap()
    }

    #[test]
    fn perfect_linear_relations() {
        let (r, p) = pearson(&s(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        assert!(p < 1e-6, "p = {p}");
        let (r, _) = pearson(&s(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert_abs_diff_eq!(r, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            pearson(&s(&[1.0, 2.0], &[1.0, 2.0])),
            Err(StatsError::InsufficientSamples { needed: 3, got: 2 })
        );
    }

    #[test]
    fn constant_series_is_reported() {
        let c = s(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]);
        assert_eq!(pearson(&c), Err(StatsError::ConstantSeries("metric")));
        assert_eq!(spearman(&c), Err(StatsError::ConstantSeries("metric")));
        assert_eq!(kendall(&c), Err(StatsError::ConstantSeries("metric")));
        let c = s(&[0.1, 0.2, 0.3], &[1.0, 1.0, 1.0]);
        assert_eq!(kendall(&c), Err(StatsError::ConstantSeries("human")));
    }

    #[test]
    fn length_mismatch_and_nan() {
        assert_eq!(PairedSamples::new(vec![1.0], vec![]), Err(StatsError::LengthMismatch(1, 0)));
        assert_eq!(PairedSamples::new(vec![1.0, f64::NAN], vec![1.0, 2.0]), Err(StatsError::NonFinite(1)));
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_and_kendall_on_orderings() {
        let xs = [0.1, 0.4, 0.2, 0.9, 0.5];
        let cubed: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3) + 2.0).collect();
        assert_abs_diff_eq!(spearman(&s(&xs, &cubed)).unwrap().0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kendall(&s(&xs, &cubed)).unwrap().0, 1.0, epsilon = 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(spearman(&s(&xs, &neg)).unwrap().0, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kendall(&s(&xs, &neg)).unwrap().0, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn error_stats_identities() {
        let xs = [0.1, 0.5, 0.9, 0.3];
        let e = error_stats(&s(&xs, &xs)).unwrap();
        assert_eq!((e.mae, e.rmse), (0.0, 0.0));
        assert_abs_diff_eq!(e.r_squared, 1.0, epsilon = 1e-15);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.25).collect();
        let e = error_stats(&s(&xs, &shifted)).unwrap();
        assert_abs_diff_eq!(e.mae, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(e.rmse, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn l2_deviation_is_rmse_times_root_n() {
        let d = s(&[0.0, 0.0, 0.0, 0.0], &[0.3, 0.4, 0.0, 0.0]);
        assert_abs_diff_eq!(l2_deviation(&d), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn inversion_count() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 0.0];
        assert_eq!(sort_counting_inversions(&mut v), 7);
        assert_eq!(v, vec![0.0, 1.0, 2.0, 2.0, 3.0]);
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (proptest::collection::vec(-5.0f64..5.0, n), proptest::collection::vec(-5.0f64..5.0, n))
        })
    }

    proptest! {
        #[test]
        fn pearson_is_affine_invariant((xs, ys) in series(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let base = pearson(&s(&xs, &ys));
            prop_assume!(base.is_ok());
            let r = base.unwrap().0;
            let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&s(&moved, &ys)).unwrap().0 - r).abs() < 1e-9);
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson(&s(&flipped, &ys)).unwrap().0 + r).abs() < 1e-9);
        }

        #[test]
        fn spearman_is_monotone_invariant((xs, ys) in series()) {
            let base = spearman(&s(&xs, &ys));
            prop_assume!(base.is_ok());
            let warped: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
            prop_assert!((spearman(&s(&warped, &ys)).unwrap().0 - base.unwrap().0).abs() < 1e-12);
        }

        #[test]
        fn self_correlation_is_one((xs, _) in series()) {
            let c = s(&xs, &xs);
            prop_assume!(pearson(&c).is_ok());
            prop_assert!((pearson(&c).unwrap().0 - 1.0).abs() < 1e-12);
            prop_assert!((spearman(&c).unwrap().0 - 1.0).abs() < 1e-12);
            prop_assert!((kendall(&c).unwrap().0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rmse_dominates_mae((xs, ys) in series()) {
            let c = s(&xs, &ys);
            prop_assert!(rmse(&c) >= mae(&c));
            prop_assert!(mae(&c) >= 0.0);
        }

        #[test]
        fn coefficients_and_p_values_are_bounded((xs, ys) in series()) {
            if let Ok(rep) = correlation_report(&s(&xs, &ys)) {
                for v in [rep.pearson_r, rep.spearman_rho, rep.kendall_tau] {
                    prop_assert!((-1.0..=1.0).contains(&v));
                }
                for p in [rep.pearson_p, rep.spearman_p, rep.kendall_p] {
                    prop_assert!((0.0..=1.0).contains(&p), "p = {}", p);
                }
                prop_assert!((rep.r_squared - rep.pearson_r * rep.pearson_r).abs() <= 1e-12);
            }
        }
    }
}
