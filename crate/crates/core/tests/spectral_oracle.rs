//! Spectral diagnostics against independent oracles: a dense eigensolver,
//! Monte Carlo expectations, and the exact structural bounds on B and A.

mod common;

use common::{dense_two_norm, random_dataset, uniform_design_dataset};
use knn_loocv::dataset::draw_noise;
use knn_loocv::dataset::NoiseFamily;
use knn_loocv::neighbors::{build_table, TieRule};
use knn_loocv::rng;
use knn_loocv::spectral::{build_a, build_b, expected_quadratic_noise};
use rand::Rng;

#[test]
fn power_iteration_matches_dense_eigensolver() {
    for seed in 0..10 {
        let mut s = rng::stream(seed, &[0xE16E]);
        let n = s.gen_range(10..=60);
        let d = s.gen_range(1..=3usize);
        let data = random_dataset(seed + 7, n, d);
        let table = build_table(&data, n - 1, TieRule::seeded(seed)).unwrap();
        for k in [1usize, 2, 5, n / 2, n - 1] {
            let k = k.clamp(1, n - 1);
            let a = build_a(build_b(&table, k).unwrap());
            let power = a.two_norm(1e-10).unwrap();
            let dense = dense_two_norm(&a);
            assert!(
                (power - dense).abs() <= 1e-8 * dense.max(1.0),
                "seed {seed} n {n} k {k}: power {power} dense {dense}"
            );
        }
    }
}

#[test]
fn quadratic_noise_expectation_monte_carlo() {
    // E[eps' A eps] = (1 + 1/k) sigma^2, checked at n = 50, k = 3, sigma^2 = 4
    let n = 50;
    let k = 3;
    let sigma = 2.0;
    let data = uniform_design_dataset(42, n, 2);
    let table = build_table(&data, k, TieRule::seeded(1)).unwrap();
    let a = build_a(build_b(&table, k).unwrap());

    let draws = 100_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for r in 0..draws {
        let eps = draw_noise(NoiseFamily::Gaussian, sigma, n, r);
        let q = a.quadratic_form(&eps).unwrap();
        sum += q;
        sum_sq += q * q;
    }
    let mean = sum / draws as f64;
    let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
    let se = (var / draws as f64).sqrt();
    let target = expected_quadratic_noise(k, sigma * sigma);
    assert!(
        (mean - target).abs() <= 3.0 * se,
        "mean {mean}, target {target}, se {se}"
    );
}

#[test]
fn row_inner_products_bounded_by_two_over_k() {
    for seed in 0..8 {
        let mut s = rng::stream(seed, &[0xB0B]);
        let n = s.gen_range(10..=200);
        let data = random_dataset(seed + 100, n, 2);
        let table = build_table(&data, n - 1, TieRule::seeded(seed)).unwrap();
        for k in [1usize, 3, (n - 1) / 2, n - 1] {
            let k = k.clamp(1, n - 1);
            let b = build_b(&table, k).unwrap();
            let bound = 2.0 / k as f64 + 1e-12;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let dot = b.row_dot(i, j);
                        assert!(
                            dot.abs() <= bound,
                            "seed {seed} k {k}: <b_{i}, b_{j}> = {dot}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn gram_matrix_is_psd_and_symmetric() {
    for seed in 0..6 {
        let mut s = rng::stream(seed, &[0x90D]);
        let n = s.gen_range(10..=80);
        let data = random_dataset(seed + 11, n, 3);
        let table = build_table(&data, n - 1, TieRule::seeded(seed)).unwrap();
        let k = s.gen_range(1..n);
        let a = build_a(build_b(&table, k).unwrap());
        for i in 0..n {
            for j in (i + 1)..n {
                assert_eq!(a.entry(i, j), a.entry(j, i), "asymmetry at ({i},{j})");
            }
        }
        for probe in 0..20 {
            let x: Vec<f64> = (0..n)
                .map(|t| {
                    let mut r = rng::stream(probe, &[seed, t as u64]);
                    r.gen::<f64>() - 0.5
                })
                .collect();
            let q = a.quadratic_form(&x).unwrap();
            assert!(q >= -1e-12, "negative Rayleigh numerator {q}");
        }
    }
}

#[test]
fn b_has_zero_row_sums_and_fixed_support() {
    for seed in 0..6 {
        let mut s = rng::stream(seed, &[0x0B5]);
        let n = s.gen_range(5..=150);
        let data = random_dataset(seed + 23, n, 1);
        let table = build_table(&data, n - 1, TieRule::seeded(seed)).unwrap();
        let k = s.gen_range(1..n);
        let b = build_b(&table, k).unwrap();
        assert_eq!(b.nnz(), n * (k + 1));
        for i in 0..n {
            assert!(b.row_sum(i).abs() <= 1e-12, "row {i} sum {}", b.row_sum(i));
            assert_eq!(b.row_cols(i).len(), k + 1);
        }
    }
}

#[test]
fn norm_diagnostics_report_is_consistent() {
    let data = uniform_design_dataset(5, 300, 2);
    let k = 17;
    let table = build_table(&data, k, TieRule::seeded(5)).unwrap();
    let report = knn_loocv::spectral::diagnostics(&table, 2, k, 1e-8).unwrap();
    assert_eq!(report.n, 300);
    assert_eq!(report.k, k);
    assert!((report.trace - (1.0 + 1.0 / k as f64)).abs() <= 1e-12);
    assert_eq!(report.n_frobenius_sq, 300.0 * report.frobenius_sq);
    assert_eq!(report.n_two_norm, 300.0 * report.two_norm);
    // 2-norm below Frobenius, above largest diagonal-ish floor 1/n
    assert!(report.two_norm <= report.frobenius_sq.sqrt() + 1e-12);
    assert!(report.two_norm >= 1.0 / 300.0);
    let max_in: usize = report.max_in_degree;
    assert!(max_in >= k, "in-degree max below k is impossible on uniform designs at this k");
}
