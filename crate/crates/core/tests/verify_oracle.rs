//! Verification-harness oracles: the closed-form MSE against brute Monte
//! Carlo, z-score calibration, and gap-experiment behavior in regimes with
//! known answers.

mod common;

use knn_loocv::dataset::{
    draw_noise, generate_synthetic, Design, LabeledDataset, NoiseFamily, RegressionFunction,
    SyntheticSpec,
};
use knn_loocv::neighbors::{build_table, NeighborTable, TieRule};
use knn_loocv::verify::{
    decomposition_check, exact_mse, gap_experiment, k_star, median, mse_curve, ExperimentSpec,
    KMaxRule,
};

fn synthetic(seed: u64, n: usize, d: usize, sd: f64, f: RegressionFunction) -> LabeledDataset {
    generate_synthetic(&SyntheticSpec {
        n,
        d,
        function_id: f,
        noise_sd: sd,
        noise_family: NoiseFamily::Gaussian,
        domain: None,
        design: Design::UniformRandom,
        seed,
    })
    .unwrap()
}

/// Brute Monte Carlo estimate of MSE(k): redraw the noise, rebuild the
/// responses, average the squared estimation error.
fn monte_carlo_mse(
    labeled: &LabeledDataset,
    table: &NeighborTable,
    k: usize,
    redraws: u64,
) -> (f64, f64) {
    let n = labeled.data.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for r in 0..redraws {
        let eps = draw_noise(labeled.noise_family, labeled.noise_sd, n, 0xC0FFEE ^ r);
        let y: Vec<f64> = labeled.mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for &j in &table.row(i)[..k] {
                s += y[j as usize];
            }
            let err = labeled.mu[i] - s / k as f64;
            acc += err * err;
        }
        let mse_hat = acc / n as f64;
        sum += mse_hat;
        sum_sq += mse_hat * mse_hat;
    }
    let mean = sum / redraws as f64;
    let var = (sum_sq / redraws as f64 - mean * mean).max(0.0);
    (mean, (var / redraws as f64).sqrt())
}

#[test]
fn closed_form_mse_matches_monte_carlo_on_hand_instance() {
    // points [0,1,3], mu = [0,1,3], sigma = 1, k = 1: closed form gives 3
    let data = knn_loocv::Dataset::from_flat(vec![0.0, 1.0, 3.0], 1, vec![0.0, 1.0, 3.0]).unwrap();
    let labeled = LabeledDataset {
        mu: vec![0.0, 1.0, 3.0],
        data,
        noise_sd: 1.0,
        function_id: RegressionFunction::Linear,
        noise_family: NoiseFamily::Gaussian,
        seed: 1,
    };
    let table = build_table(&labeled.data, 2, TieRule::index_order()).unwrap();
    assert_eq!(exact_mse(&labeled, &table, 1).unwrap(), 3.0);

    let (mc, se) = monte_carlo_mse(&labeled, &table, 1, 100_000);
    assert!((mc - 3.0).abs() <= 3.0 * se, "mc {mc}, se {se}");
}

#[test]
fn closed_form_mse_matches_monte_carlo_on_random_instances() {
    for seed in 0..4 {
        let labeled = synthetic(seed, 30, 2, 0.5, RegressionFunction::LipschitzSine);
        let table = build_table(&labeled.data, 29, TieRule::seeded(seed)).unwrap();
        for k in [1usize, 4, 15] {
            let closed = exact_mse(&labeled, &table, k).unwrap();
            let (mc, se) = monte_carlo_mse(&labeled, &table, k, 20_000);
            assert!(
                (mc - closed).abs() <= 3.0 * se,
                "seed {seed} k {k}: mc {mc}, closed {closed}, se {se}"
            );
        }
    }
}

#[test]
fn mse_curve_dominates_variance_floor() {
    let labeled = synthetic(9, 40, 2, 0.8, RegressionFunction::Linear);
    let table = build_table(&labeled.data, 39, TieRule::seeded(9)).unwrap();
    let curve = mse_curve(&labeled, &table).unwrap();
    let sigma_sq = 0.8 * 0.8;
    for (idx, &v) in curve.iter().enumerate() {
        let k = idx + 1;
        assert!(v >= sigma_sq / k as f64 - 1e-15, "k = {k}: {v}");
        assert!(v.is_finite());
    }
}

#[test]
fn decomposition_z_scores_are_calibrated() {
    // if the closed form is correct, z ~ N(0,1): |z| < 3 should essentially
    // always hold across a hundred independent harness runs
    let mut ok = 0;
    let runs = 100;
    for seed in 0..runs {
        let labeled = synthetic(seed, 30, 1, 1.0, RegressionFunction::LipschitzSine);
        let table = build_table(&labeled.data, 29, TieRule::seeded(seed)).unwrap();
        let check = decomposition_check(&labeled, &table, 3, 400).unwrap();
        if check.z_score.abs() < 3.0 {
            ok += 1;
        }
    }
    assert!(ok >= 99, "only {ok}/{runs} runs had |z| < 3");
}

#[test]
fn decomposition_mean_tracks_target_closely_at_high_redraws() {
    let labeled = synthetic(4, 25, 2, 1.0, RegressionFunction::Linear);
    let table = build_table(&labeled.data, 24, TieRule::seeded(4)).unwrap();
    let check = decomposition_check(&labeled, &table, 2, 100_000).unwrap();
    assert!(check.z_score.abs() < 3.0, "z = {}", check.z_score);
    assert!((check.mc_mean_f - check.target).abs() / check.target < 0.01);
}

#[test]
fn constant_function_gap_profile() {
    // variance-only regime: k* = k_max, and with growing n the selected
    // k_tilde concentrates high enough that the MSE ratio approaches 1
    let spec = ExperimentSpec {
        data_spec: SyntheticSpec {
            n: 0,
            d: 1,
            function_id: RegressionFunction::Constant,
            noise_sd: 1.0,
            noise_family: NoiseFamily::Gaussian,
            domain: None,
            design: Design::UniformRandom,
            seed: 0,
        },
        n_grid: vec![64, 256],
        replicates: 20,
        k_max_rule: KMaxRule::Full,
        master_seed: 21,
        max_table_cells: 1 << 24,
    };
    let report = gap_experiment(&spec).unwrap();
    for rec in &report.records {
        let k_max = report.summaries.iter().find(|s| s.n == rec.n).unwrap().k_max;
        assert_eq!(rec.k_star, k_max, "constant mu has k* = k_max");
        assert!(rec.gap >= 0.0);
        // exact MSE(k) = sigma^2/k makes the ratio computable directly
        let expected_ratio = k_max as f64 / rec.k_tilde as f64;
        assert!((rec.mse_tilde / rec.mse_star - expected_ratio).abs() < 1e-9);
    }
    let ratios: Vec<f64> = report
        .summaries
        .iter()
        .map(|s| s.median_ratio)
        .collect();
    assert!(
        ratios[1] <= ratios[0] + 1e-12,
        "median ratio should not grow with n: {ratios:?}"
    );
}

#[test]
fn noiseless_replicates_have_zero_gap() {
    // sigma = 0: f(k) is the bias curve itself, so both argmins coincide
    let spec = ExperimentSpec {
        data_spec: SyntheticSpec {
            n: 0,
            d: 2,
            function_id: RegressionFunction::LipschitzSine,
            noise_sd: 0.0,
            noise_family: NoiseFamily::Gaussian,
            domain: None,
            design: Design::UniformRandom,
            seed: 0,
        },
        n_grid: vec![60],
        replicates: 3,
        k_max_rule: KMaxRule::Full,
        master_seed: 5,
        max_table_cells: 1 << 24,
    };
    let report = gap_experiment(&spec).unwrap();
    for rec in &report.records {
        assert_eq!(rec.k_tilde, rec.k_star);
        assert_eq!(rec.gap, 0.0);
    }
}

#[test]
fn bias_only_and_variance_only_select_extremes() {
    let labeled = synthetic(2, 50, 1, 0.0, RegressionFunction::LipschitzSine);
    let table = build_table(&labeled.data, 49, TieRule::seeded(2)).unwrap();
    assert_eq!(k_star(&labeled, &table).unwrap(), 1);

    let constant = synthetic(2, 50, 1, 1.0, RegressionFunction::Constant);
    let table = build_table(&constant.data, 49, TieRule::seeded(2)).unwrap();
    assert_eq!(k_star(&constant, &table).unwrap(), 49);
}

#[test]
fn median_helper() {
    assert_eq!(median(&[5.0]), 5.0);
    assert_eq!(median(&[2.0, 1.0]), 1.5);
}
