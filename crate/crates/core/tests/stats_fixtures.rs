use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use serde::Deserialize;
use summcheck::stats::{correlation_report, kendall, PairedSamples};

#[derive(Deserialize)]
struct Expected {
    n: usize,
    pearson_r: f64,
    pearson_p: f64,
    spearman_rho: f64,
    spearman_p: f64,
    kendall_tau: f64,
    kendall_p: f64,
    r_squared: f64,
    mae: f64,
    rmse: f64,
    l2_deviation: f64,
}

#[derive(Deserialize)]
struct Fixture {
    metric: Vec<f64>,
    human: Vec<f64>,
    expected: Expected,
}

fn load(name: &str) -> Fixture {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/stats").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// All-pairs tau-b.
fn kendall_quadratic(xs: &[f64], ys: &[f64]) -> f64 {
    let (mut nc, mut nd, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = (xs[i] - xs[j]).signum() * f64::from(xs[i] != xs[j]);
            let dy = (ys[i] - ys[j]).signum() * f64::from(ys[i] != ys[j]);
            match (dx == 0.0, dy == 0.0) {
                (true, true) => {}
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                _ if dx == dy => nc += 1,
                _ => nd += 1,
            }
        }
    }
    (nc - nd) as f64 / (((nc + nd + tx) * (nc + nd + ty)) as f64).sqrt()
}

fn direct_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn check(name: &str) {
    let f = load(name);
    let e = &f.expected;
    let samples = PairedSamples::new(f.metric.clone(), f.human.clone()).unwrap();
    let rep = correlation_report(&samples).unwrap();
    assert_eq!(rep.n, e.n);
    for (label, got, want) in [
        ("pearson_r", rep.pearson_r, e.pearson_r),
        ("spearman_rho", rep.spearman_rho, e.spearman_rho),
        ("kendall_tau", rep.kendall_tau, e.kendall_tau),
        ("mae", rep.mae, e.mae),
        ("rmse", rep.rmse, e.rmse),
        ("l2_deviation", rep.l2_deviation, e.l2_deviation),
        ("r_squared", rep.r_squared, e.r_squared),
    ] {
        assert!((got - want).abs() <= 1e-6, "{name} {label}: {got} vs {want}");
    }
    for (label, got, want) in [
        ("pearson_p", rep.pearson_p, e.pearson_p),
        ("spearman_p", rep.spearman_p, e.spearman_p),
        ("kendall_p", rep.kendall_p, e.kendall_p),
    ] {
        assert!((got - want).abs() <= 1e-8, "{name} {label}: {got} vs {want}");
    }
    assert_abs_diff_eq!(rep.pearson_r, direct_pearson(&f.metric, &f.human), epsilon = 1e-9);
    assert_abs_diff_eq!(rep.kendall_tau, kendall_quadratic(&f.metric, &f.human), epsilon = 1e-12);
    assert_abs_diff_eq!(rep.r_squared, rep.pearson_r * rep.pearson_r, epsilon = 1e-12);
}

#[test]
fn synthetic_300_matches_reference_values() {
    check("synthetic_300.json");
}

#[test]
fn small_tied_set_matches_reference_values() {
    check("small_ties.json");
}

#[test]
fn squared_headline_correlation() {
    assert_abs_diff_eq!(0.694f64 * 0.694, 0.481_636, epsilon = 1e-12);
}

proptest! {
    #[test]
    fn fast_kendall_agrees_with_all_pairs(
        pairs in proptest::collection::vec((0u8..6, 0u8..6), 3..60)
    ) {
        // small integer alphabets force many ties
        let xs: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let ys: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        let samples = PairedSamples::new(xs.clone(), ys.clone()).unwrap();
        if let Ok((tau, _)) = kendall(&samples) {
            prop_assert!((tau - kendall_quadratic(&xs, &ys)).abs() < 1e-12);
        }
    }
}
