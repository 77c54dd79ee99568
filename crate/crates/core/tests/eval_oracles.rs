use fedxfer::eval::{mean, normal_cdf, normal_inverse_cdf, roc_auc, sample_std, significance};
use fedxfer::rng::rng_for;
use rand::Rng;

/// Counts every (positive, negative) pair: 1 when ordered correctly, ½ on ties.
fn pairwise_auc(scores: &[f64], labels: &[i8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != -1 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn auc_equals_pairwise_count() {
    let mut rng = rng_for(17, "auc");
    let mut checked = 0;
    while checked < 500 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(1..=n + 3);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / 7.0)
            .collect();
        let labels: Vec<i8> = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        if !labels.contains(&1) || !labels.contains(&-1) {
            continue;
        }
        assert_eq!(
            roc_auc(&scores, &labels).unwrap().auc,
            pairwise_auc(&scores, &labels),
            "scores {scores:?} labels {labels:?}"
        );
        checked += 1;
    }
}

#[test]
fn auc_ignores_increasing_transforms() {
    let mut rng = rng_for(18, "auc-mono");
    for _ in 0..100 {
        let n = rng.random_range(4..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut labels: Vec<i8> = (0..n)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        labels[0] = 1;
        labels[1] = -1;
        let base = roc_auc(&scores, &labels).unwrap().auc;
        let warped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| s * 0.25).collect();
        assert_eq!(roc_auc(&warped, &labels).unwrap().auc, base);
        assert_eq!(roc_auc(&scaled, &labels).unwrap().auc, base);
    }
}

// Reference quantiles computed with 50-digit arithmetic.
const QUANTILES: [(f64, f64); 6] = [
    (0.01, -2.326_347_874_040_841),
    (0.03, -1.880_793_608_151_251),
    (0.05, -1.644_853_626_951_472_7),
    (0.5, 0.0),
    (0.975, 1.959_963_984_540_054),
    (1e-6, -4.753_424_308_822_899),
];

#[test]
fn quantiles_match_reference_values() {
    for (p, q) in QUANTILES {
        let got = normal_inverse_cdf(p).unwrap();
        assert!((got - q).abs() < 1e-9, "p = {p}: {got} vs {q}");
    }
}

#[test]
fn cdf_inverts_quantile_on_a_dense_grid() {
    let (lo, hi) = (1e-6f64, 1.0 - 1e-6);
    let n = 10_000;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let p = lo + (hi - lo) * i as f64 / n as f64;
        let x = normal_inverse_cdf(p).unwrap();
        worst = worst.max((normal_cdf(x) - p).abs());
    }
    assert!(worst < 1e-9, "worst |Φ(Φ⁻¹(p)) − p| = {worst}");
}

#[test]
fn significance_formula() {
    let series = [0.91, 0.95, 0.89, 0.97, 0.93, 0.90, 0.94];
    let mu = series.iter().sum::<f64>() / series.len() as f64;
    let sigma = (series.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>()
        / (series.len() - 1) as f64)
        .sqrt();
    for (p, q) in QUANTILES.iter().take(3) {
        let sig = significance(&series, p * 100.0).unwrap();
        assert!((sig - (mu + sigma * q)).abs() < 1e-9);
    }
    assert_eq!(significance(&series, 50.0).unwrap(), mean(&series));
    assert!((sample_std(&series).unwrap() - sigma).abs() < 1e-15);
}

#[test]
fn significance_worked_example() {
    // Two values symmetric around 90 with sample σ = 2.
    let series = [90.0 - 2.0f64.sqrt(), 90.0 + 2.0f64.sqrt()];
    assert!((sample_std(&series).unwrap() - 2.0).abs() < 1e-12);
    let sig = significance(&series, 5.0).unwrap();
    assert!((sig - 86.710_292_746_097_05).abs() < 1e-9, "{sig}");
}

#[test]
fn significance_is_monotone_in_p() {
    let mut rng = rng_for(19, "sig");
    for _ in 0..50 {
        let series: Vec<f64> = (0..30).map(|_| rng.random_range(0.6..1.0)).collect();
        let sigs: Vec<f64> = [0.5, 1.0, 3.0, 5.0, 25.0, 50.0, 90.0]
            .iter()
            .map(|&p| significance(&series, p).unwrap())
            .collect();
        assert!(sigs.windows(2).all(|w| w[0] <= w[1]), "{sigs:?}");
    }
}
