//! Shared test oracles, kept independent of the implementation paths they
//! check: full-sort neighbor search, per-k LOOCV recomputation, and a dense
//! eigensolver.

#![allow(dead_code)]

use knn_loocv::dataset::{design_points, Dataset, Design, SyntheticSpec};
use knn_loocv::neighbors::NeighborTable;
use knn_loocv::rng;
use rand::Rng;

/// Random dataset with continuous coordinates (ties have probability zero).
pub fn random_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let mut stream = rng::stream(seed, &[0xDA7A]);
    let points: Vec<f64> = (0..n * d).map(|_| stream.gen::<f64>() * 4.0 - 2.0).collect();
    let responses: Vec<f64> = (0..n).map(|_| stream.gen::<f64>() * 6.0 - 3.0).collect();
    Dataset::from_flat(points, d, responses).unwrap()
}

/// A frozen uniform design on the unit box with zeroed responses.
pub fn uniform_design_dataset(seed: u64, n: usize, d: usize) -> Dataset {
    let spec = SyntheticSpec {
        n,
        d,
        function_id: knn_loocv::dataset::RegressionFunction::Constant,
        noise_sd: 0.0,
        noise_family: knn_loocv::dataset::NoiseFamily::Gaussian,
        domain: None,
        design: Design::UniformRandom,
        seed,
    };
    let points = design_points(&spec).unwrap();
    Dataset::from_flat(points, d, vec![0.0; n]).unwrap()
}

/// O(n^2 log n) neighbor oracle: all pairwise distances, full sort per row,
/// ties by ascending index.
pub fn naive_neighbor_rows(data: &Dataset, k_max: usize) -> (Vec<Vec<u32>>, Vec<Vec<f64>>) {
    let n = data.len();
    let mut order = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(n);
    for i in 0..n {
        let mut cands: Vec<(f64, u32)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2: f64 = data
                    .point(i)
                    .iter()
                    .zip(data.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j as u32)
            })
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(k_max);
        order.push(cands.iter().map(|c| c.1).collect());
        dists.push(cands.iter().map(|c| c.0.sqrt()).collect());
    }
    (order, dists)
}

/// Per-k LOOCV recomputation over given neighbor rows: for each k the k-NN
/// mean is rebuilt from scratch by a fresh sum, no prefix reuse.
pub fn naive_loocv_curve(responses: &[f64], rows: &[Vec<u32>], k_max: usize) -> Vec<f64> {
    let n = responses.len();
    let mut f = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut acc = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let mut s = 0.0;
            for &j in &row[..k] {
                s += responses[j as usize];
            }
            let r = responses[i] - s / k as f64;
            acc += r * r;
        }
        f.push(acc / n as f64);
    }
    f
}

pub fn table_rows(table: &NeighborTable) -> Vec<Vec<u32>> {
    (0..table.len()).map(|i| table.row(i).to_vec()).collect()
}

/// Largest eigenvalue by dense symmetric eigendecomposition.
pub fn dense_two_norm(a: &knn_loocv::GramMatrix) -> f64 {
    let n = a.n();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a.entry(i, j));
    let eigen = nalgebra::SymmetricEigen::new(m);
    eigen.eigenvalues.iter().fold(f64::MIN, |acc, &v| acc.max(v))
}

/// Upper-tail chi-square p-value.
pub fn chi_square_p(statistic: f64, df: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(df).unwrap().cdf(statistic)
}
