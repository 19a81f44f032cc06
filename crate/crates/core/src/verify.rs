//! Monte Carlo harness for the optimality-gap behavior of LOOCV selection.
//!
//! With a synthetic dataset the exact MSE(k) has a closed form: the residual
//! mu_i - mean_{N_k(i)} mu splits into a deterministic bias term plus a mean
//! of k i.i.d. noise variables, and the cross terms vanish in expectation, so
//! MSE(k) = (1/n) sum_i (mu_i - mean mu over N_k(i))^2 + sigma^2 / k.
//! The harness freezes the design per (n, seed), redraws only the noise,
//! selects k_tilde from each noisy curve, and records the gap
//! MSE(k_tilde) - MSE(k_star) across replicates and sample sizes.

use serde::{Deserialize, Serialize};

use crate::dataset::{design_points, draw_noise, LabeledDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::exec::{self, CHUNK};
use crate::neighbors::{build_table, NeighborTable, TieRule};
use crate::regress::curve_from_table;
use crate::rng::{derive_seed, tag};

/// Exact MSE(k) for a labeled dataset: squared bias plus sigma^2 / k.
pub fn exact_mse(labeled: &LabeledDataset, table: &NeighborTable, k: usize) -> Result<f64> {
    table.check_k(k)?;
    if table.len() != labeled.data.len() {
        return Err(Error::LengthMismatch {
            expected: labeled.data.len(),
            actual: table.len(),
        });
    }
    let mu = &labeled.mu;
    let partials = exec::map_chunks(table.len(), CHUNK, true, |range| {
        let mut acc = 0.0;
        for i in range {
            let mut prefix = 0.0;
            for &j in &table.row(i)[..k] {
                prefix += mu[j as usize];
            }
            let bias = mu[i] - prefix / k as f64;
            acc += bias * bias;
        }
        vec![acc]
    });
    let bias_sq = exec::merge_partials(partials)[0] / table.len() as f64;
    let sigma_sq = labeled.noise_sd * labeled.noise_sd;
    Ok(bias_sq + sigma_sq / k as f64)
}

/// MSE(k) for every k in 1..=k_max, sharing the streaming prefix-sum pass.
pub fn mse_curve(labeled: &LabeledDataset, table: &NeighborTable) -> Result<Vec<f64>> {
    let bias_curve = curve_from_table(table, &labeled.mu, true)?;
    let sigma_sq = labeled.noise_sd * labeled.noise_sd;
    Ok(bias_curve
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &b)| b + sigma_sq / (idx + 1) as f64)
        .collect())
}

/// Smallest minimizer of the exact MSE over 1..=k_max.
pub fn k_star(labeled: &LabeledDataset, table: &NeighborTable) -> Result<usize> {
    let curve = mse_curve(labeled, table)?;
    Ok(argmin(&curve) + 1)
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = idx;
        }
    }
    best
}

/// f(k) for a single k and response vector.
fn f_at_k(table: &NeighborTable, y: &[f64], k: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..table.len() {
        let mut prefix = 0.0;
        for &j in &table.row(i)[..k] {
            prefix += y[j as usize];
        }
        let r = y[i] - prefix / k as f64;
        acc += r * r;
    }
    acc / table.len() as f64
}

/// Monte Carlo check of E[f(k)] = E[eps^2] + MSE(k).
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionCheck {
    pub mc_mean_f: f64,
    pub target: f64,
    pub z_score: f64,
    pub std_error: f64,
    pub redraws: usize,
}

/// Redraw the noise `redraws` times, recompute f(k) each time, and compare
/// the Monte Carlo mean against sigma^2 + MSE(k).
pub fn decomposition_check(
    labeled: &LabeledDataset,
    table: &NeighborTable,
    k: usize,
    redraws: usize,
) -> Result<DecompositionCheck> {
    if redraws < 100 {
        return Err(Error::InvalidSpec(format!(
            "decomposition check needs >= 100 redraws, got {redraws}"
        )));
    }
    let sigma_sq = labeled.noise_sd * labeled.noise_sd;
    let target = sigma_sq + exact_mse(labeled, table, k)?;
    let n = labeled.data.len();
    let mu = &labeled.mu;

    let partials = exec::map_chunks(redraws, CHUNK, true, |range| {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in range {
            let seed = derive_seed(labeled.seed, &[tag::DECOMPOSITION, r as u64]);
            let eps = draw_noise(labeled.noise_family, labeled.noise_sd, n, seed);
            let y: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
            let f = f_at_k(table, &y, k);
            sum += f;
            sum_sq += f * f;
        }
        vec![sum, sum_sq]
    });
    let merged = exec::merge_partials(partials);
    let mean = merged[0] / redraws as f64;
    let var = (merged[1] / redraws as f64 - mean * mean).max(0.0);
    let std_error = (var / redraws as f64).sqrt();
    let diff = mean - target;
    let z_score = if std_error > 0.0 {
        diff / std_error
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    };
    Ok(DecompositionCheck {
        mc_mean_f: mean,
        target,
        z_score,
        std_error,
        redraws,
    })
}

/// How far the selection search ranges for a given n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMaxRule {
    /// The full argmin range n - 1; capped at ceil(n^(2/3)) beyond n = 1600
    /// to keep desk-scale tables affordable.
    Full,
    /// ceil(sqrt(n)).
    Sqrt,
    /// A fixed user choice, clamped to n - 1.
    User(usize),
}

impl KMaxRule {
    pub fn k_max_for(&self, n: usize) -> usize {
        let k = match self {
            KMaxRule::Full => {
                if n <= 1600 {
                    n - 1
                } else {
                    (n as f64).powf(2.0 / 3.0).ceil() as usize
                }
            }
            KMaxRule::Sqrt => (n as f64).sqrt().ceil() as usize,
            KMaxRule::User(k) => *k,
        };
        k.clamp(1, n - 1)
    }
}

fn default_cell_cap() -> u64 {
    crate::regress::DEFAULT_TABLE_CELL_CAP
}

/// A gap experiment: one frozen design per n, `replicates` independent noise
/// draws, gap statistics per n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Template for the synthetic data; its `n` and `seed` fields are
    /// superseded per grid entry by `n_grid` and `master_seed`.
    pub data_spec: SyntheticSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub k_max_rule: KMaxRule,
    pub master_seed: u64,
    /// Grid entries whose table would exceed this many cells are skipped and
    /// the report is flagged partial.
    #[serde(default = "default_cell_cap")]
    pub max_table_cells: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidSpec("replicates must be >= 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidSpec("n_grid must be nonempty".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidSpec(format!(
                "n_grid entries must be >= 2, got {n}"
            )));
        }
        let mut probe = self.data_spec.clone();
        probe.n = self.n_grid[0];
        probe.validate()
    }

    fn spec_for(&self, n: usize) -> SyntheticSpec {
        SyntheticSpec {
            n,
            seed: derive_seed(self.master_seed, &[tag::DESIGN, n as u64]),
            ..self.data_spec.clone()
        }
    }
}

/// One replicate's selection outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub n: usize,
    pub replicate: usize,
    pub k_star: usize,
    pub k_tilde: usize,
    pub mse_star: f64,
    pub mse_tilde: f64,
    /// MSE(k_tilde) - MSE(k_star); nonnegative because k_star is the exact
    /// minimizer over the same k range.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n: usize,
    pub k_max: usize,
    pub replicates: usize,
    pub median_gap: f64,
    pub mean_gap: f64,
    pub median_ratio: f64,
    /// median gap * sqrt(n / ln n), the scale Theorem-style bounds predict
    /// to stay bounded.
    pub scaled_median_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedGrid {
    pub n: usize,
    pub needed_cells: u64,
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub format_version: u32,
    pub spec: ExperimentSpec,
    pub records: Vec<GapRecord>,
    pub summaries: Vec<GapSummary>,
    /// True when grid entries were skipped for exceeding the cell cap.
    pub partial: bool,
    pub skipped: Vec<SkippedGrid>,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Run the experiment. Replicates are independent tasks; each derives its
/// noise seed from (master_seed, n, replicate), so the report is identical
/// for every thread count.
pub fn gap_experiment(spec: &ExperimentSpec) -> Result<GapReport> {
    gap_experiment_with(spec, true)
}

/// Sequential variant with identical output; the benchmark baseline.
pub fn gap_experiment_seq(spec: &ExperimentSpec) -> Result<GapReport> {
    gap_experiment_with(spec, false)
}

fn gap_experiment_with(spec: &ExperimentSpec, parallel: bool) -> Result<GapReport> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.n_grid.len() * spec.replicates);
    let mut summaries = Vec::with_capacity(spec.n_grid.len());
    let mut skipped = Vec::new();

    for &n in &spec.n_grid {
        let k_max = spec.k_max_rule.k_max_for(n);
        let needed = n as u64 * k_max as u64;
        if needed > spec.max_table_cells {
            skipped.push(SkippedGrid {
                n,
                needed_cells: needed,
                cap: spec.max_table_cells,
            });
            continue;
        }

        let spec_n = spec.spec_for(n);
        let points = design_points(&spec_n)?;
        let d = spec_n.d;
        let mu: Vec<f64> = (0..n)
            .map(|i| spec_n.function_id.eval(&points[i * d..(i + 1) * d]))
            .collect();
        let base = crate::dataset::Dataset::from_flat(points, d, mu.clone())?;
        // tie draw fixed before any noise draw; depends only on the design
        let tie = TieRule::seeded(spec_n.seed);
        let table = build_table(&base, k_max, tie)?;

        let bias_curve = curve_from_table(&table, &mu, parallel)?;
        let sigma_sq = spec.data_spec.noise_sd * spec.data_spec.noise_sd;
        let mse: Vec<f64> = bias_curve
            .values()
            .iter()
            .enumerate()
            .map(|(idx, &b)| b + sigma_sq / (idx + 1) as f64)
            .collect();
        let star_idx = argmin(&mse);
        let mse_star = mse[star_idx];

        let grid_records = exec::map_indices(spec.replicates, parallel, |r| {
            let noise_seed = derive_seed(spec.master_seed, &[tag::NOISE, n as u64, r as u64]);
            let eps = draw_noise(spec.data_spec.noise_family, spec.data_spec.noise_sd, n, noise_seed);
            let y: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
            let curve = curve_from_table(&table, &y, false).expect("lengths match");
            let k_tilde = curve.k_tilde();
            let mse_tilde = mse[k_tilde - 1];
            GapRecord {
                n,
                replicate: r,
                k_star: star_idx + 1,
                k_tilde,
                mse_star,
                mse_tilde,
                gap: mse_tilde - mse_star,
            }
        });

        let gaps: Vec<f64> = grid_records.iter().map(|rec| rec.gap).collect();
        let ratios: Vec<f64> = grid_records
            .iter()
            .map(|rec| rec.mse_tilde / rec.mse_star)
            .collect();
        let median_gap = median(&gaps);
        summaries.push(GapSummary {
            n,
            k_max,
            replicates: spec.replicates,
            median_gap,
            mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
            median_ratio: median(&ratios),
            scaled_median_gap: median_gap * (n as f64 / (n as f64).ln()).sqrt(),
        });
        records.extend(grid_records);
    }

    Ok(GapReport {
        format_version: crate::dataset::FORMAT_VERSION,
        spec: spec.clone(),
        records,
        summaries,
        partial: !skipped.is_empty(),
        skipped,
    })
}

/// Flat CSV, one row per replicate, for external plotting.
pub fn report_csv(report: &GapReport) -> String {
    let mut out = String::from("n,replicate,k_star,k_tilde,mse_star,mse_tilde,gap\n");
    for rec in &report.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            rec.n, rec.replicate, rec.k_star, rec.k_tilde, rec.mse_star, rec.mse_tilde, rec.gap
        ));
    }
    out
}

/// Side-by-side gap summaries for two specs that differ only in the
/// regression function; the bound's smoothness-independence shows up as
/// comparable gap scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityRow {
    pub n: usize,
    pub median_gap_a: f64,
    pub median_gap_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityReport {
    pub format_version: u32,
    pub report_a: GapReport,
    pub report_b: GapReport,
    pub per_n: Vec<AdaptivityRow>,
}

pub fn adaptivity_probe(a: &ExperimentSpec, b: &ExperimentSpec) -> Result<AdaptivityReport> {
    if a.n_grid != b.n_grid {
        return Err(Error::MismatchedExperiments("n_grid differs".into()));
    }
    if a.replicates != b.replicates || a.master_seed != b.master_seed {
        return Err(Error::MismatchedExperiments(
            "replicates and master_seed must match".into(),
        ));
    }
    let (da, db) = (&a.data_spec, &b.data_spec);
    if da.noise_sd != db.noise_sd
        || da.noise_family != db.noise_family
        || da.d != db.d
        || da.design != db.design
        || da.domain != db.domain
    {
        return Err(Error::MismatchedExperiments(
            "specs may differ only in function_id".into(),
        ));
    }
    let report_a = gap_experiment(a)?;
    let report_b = gap_experiment(b)?;
    let per_n = report_a
        .summaries
        .iter()
        .zip(&report_b.summaries)
        .map(|(sa, sb)| AdaptivityRow {
            n: sa.n,
            median_gap_a: sa.median_gap,
            median_gap_b: sb.median_gap,
        })
        .collect();
    Ok(AdaptivityReport {
        format_version: crate::dataset::FORMAT_VERSION,
        report_a,
        report_b,
        per_n,
    })
}
