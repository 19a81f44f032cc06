//! Leave-one-out cross-validation over all k in one pass, argmin selection,
//! and prediction with the selected k.
//!
//! For every point the neighbor row is walked once while a running prefix sum
//! of responses yields the k-NN mean for each k; the squared residual is
//! accumulated into f(k). This single pass over the table costs O(n * k_max)
//! and computes exactly what per-k recomputation would.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{self, CHUNK};
use crate::neighbors::{Backend, NeighborTable, SearchContext, TieMode, TieRule};

/// The curve f(1), ..., f(k_max) and its argmin.
#[derive(Debug, Clone, PartialEq)]
pub struct LoocvCurve {
    f: Vec<f64>, // f[idx] = f(idx + 1)
    k_tilde: usize,
}

impl LoocvCurve {
    pub(crate) fn from_values(f: Vec<f64>) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::Empty("LOOCV curve"));
        }
        let mut best = 0;
        for (idx, &v) in f.iter().enumerate() {
            if v < f[best] {
                best = idx;
            }
        }
        Ok(Self {
            f,
            k_tilde: best + 1,
        })
    }

    pub fn k_max(&self) -> usize {
        self.f.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn value_at(&self, k: usize) -> Result<f64> {
        if k < 1 || k > self.f.len() {
            return Err(Error::KOutOfRange {
                k,
                k_max: self.f.len(),
            });
        }
        Ok(self.f[k - 1])
    }

    /// Smallest minimizer of f.
    pub fn k_tilde(&self) -> usize {
        self.k_tilde
    }
}

/// Walk one neighbor row, accumulating the squared LOOCV residual for every
/// depth into `f`. `f[pos]` accumulates across rows in a fixed order, so the
/// curve is reproducible bit for bit.
#[inline]
fn accumulate_row(
    f: &mut [f64],
    responses: &[f64],
    y_i: f64,
    neighbors: impl Iterator<Item = u32>,
) {
    let mut prefix = 0.0;
    for (pos, j) in neighbors.enumerate() {
        prefix += responses[j as usize];
        let residual = y_i - prefix / (pos + 1) as f64;
        f[pos] += residual * residual;
    }
}

pub(crate) fn curve_from_table(
    table: &NeighborTable,
    responses: &[f64],
    parallel: bool,
) -> Result<LoocvCurve> {
    let n = table.len();
    if responses.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: responses.len(),
        });
    }
    let k_max = table.k_max();
    let partials = exec::map_chunks(n, CHUNK, parallel, |range| {
        let mut part = vec![0.0; k_max];
        for i in range {
            accumulate_row(&mut part, responses, responses[i], table.row(i).iter().copied());
        }
        part
    });
    let mut f = exec::merge_partials(partials);
    let n_f = n as f64;
    for v in &mut f {
        *v /= n_f;
    }
    LoocvCurve::from_values(f)
}

/// Entry i is the mean response over N_k(i).
pub fn loo_estimates(data: &Dataset, table: &NeighborTable, k: usize) -> Result<Vec<f64>> {
    table.check_k(k)?;
    if table.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            actual: table.len(),
        });
    }
    let responses = data.responses();
    Ok((0..data.len())
        .map(|i| {
            let mut s = 0.0;
            for &j in &table.row(i)[..k] {
                s += responses[j as usize];
            }
            s / k as f64
        })
        .collect())
}

/// The LOOCV curve for every k in 1..=k_max.
pub fn loocv_curve(data: &Dataset, table: &NeighborTable) -> Result<LoocvCurve> {
    curve_from_table(table, data.responses(), true)
}

/// Sequential variant with identical output; the benchmark baseline.
pub fn loocv_curve_seq(data: &Dataset, table: &NeighborTable) -> Result<LoocvCurve> {
    curve_from_table(table, data.responses(), false)
}

/// The LOOCV curve without materializing a neighbor table: each row's sorted
/// neighbor sequence is computed on the fly and discarded, keeping memory
/// O(n) at any k_max. Produces exactly the table-based curve.
pub fn loocv_curve_streaming(
    data: &Dataset,
    k_max: usize,
    tie: TieRule,
    backend: Backend,
) -> Result<LoocvCurve> {
    streaming_curve(data, data.responses(), k_max, tie, backend, true)
}

pub(crate) fn streaming_curve(
    data: &Dataset,
    responses: &[f64],
    k_max: usize,
    tie: TieRule,
    backend: Backend,
    parallel: bool,
) -> Result<LoocvCurve> {
    let n = data.len();
    if k_max < 1 || k_max > n - 1 {
        return Err(Error::KOutOfRange {
            k: k_max,
            k_max: n - 1,
        });
    }
    let ctx = SearchContext::new(data, backend);
    let partials = exec::map_chunks(n, CHUNK, parallel, |range| {
        let mut part = vec![0.0; k_max];
        for i in range {
            let row = ctx.table_row(data, i, k_max, &tie);
            accumulate_row(&mut part, responses, responses[i], row.iter().map(|c| c.idx));
        }
        part
    });
    let mut f = exec::merge_partials(partials);
    let n_f = n as f64;
    for v in &mut f {
        *v /= n_f;
    }
    LoocvCurve::from_values(f)
}

/// Smallest k attaining the minimum of f.
pub fn select_k(curve: &LoocvCurve) -> usize {
    curve.k_tilde()
}

/// Cap on n * k_max before `fit` switches from a materialized table to
/// streaming row computation (~2e8 cells is a couple of GB of table).
pub const DEFAULT_TABLE_CELL_CAP: u64 = 200_000_000;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Neighbor depth searched; default n - 1, clamped to n - 1.
    pub k_max: Option<usize>,
    pub tie: TieRule,
    /// Use this k instead of the LOOCV argmin (the curve is still computed).
    pub k_override: Option<usize>,
    pub backend: Backend,
    /// Above this many table cells the curve is computed by streaming and no
    /// table is kept on the model.
    pub table_cell_cap: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            k_max: None,
            tie: TieRule::seeded(0),
            k_override: None,
            backend: Backend::Auto,
            table_cell_cap: DEFAULT_TABLE_CELL_CAP,
        }
    }
}

/// A dataset with its LOOCV curve and chosen neighbor count.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub data: Dataset,
    /// Present when the table fit under the cell cap; otherwise the model
    /// carries only the parameters needed to rebuild it.
    pub table: Option<NeighborTable>,
    pub k: usize,
    pub curve: LoocvCurve,
    pub tie: TieRule,
    pub k_overridden: bool,
}

pub fn fit(data: Dataset, options: &FitOptions) -> Result<FittedModel> {
    let n = data.len();
    let k_max = options.k_max.unwrap_or(n - 1).min(n - 1).max(1);
    if let Some(k) = options.k_override {
        if k < 1 || k > k_max {
            return Err(Error::KOutOfRange { k, k_max });
        }
    }
    let cells = n as u64 * k_max as u64;
    let (table, curve) = if cells <= options.table_cell_cap {
        let table = crate::neighbors::build_table_with(&data, k_max, options.tie, options.backend, true)?;
        let curve = loocv_curve(&data, &table)?;
        (Some(table), curve)
    } else {
        let curve = loocv_curve_streaming(&data, k_max, options.tie, options.backend)?;
        (None, curve)
    };
    let k = options.k_override.unwrap_or_else(|| curve.k_tilde());
    Ok(FittedModel {
        data,
        table,
        k,
        curve,
        tie: options.tie,
        k_overridden: options.k_override.is_some(),
    })
}

impl FittedModel {
    /// Predict at query points (row-major, dimension matching the data).
    /// Out-of-sample semantics: no self-exclusion, a zero-distance training
    /// point is its own nearest neighbor.
    pub fn predict(&self, queries: &[f64]) -> Result<Vec<f64>> {
        let d = self.data.dim();
        if queries.len() % d != 0 {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: queries.len() % d,
            });
        }
        if !queries.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("query points".into()));
        }
        let m = queries.len() / d;
        let ctx = SearchContext::new(&self.data, Backend::Auto);
        let responses = self.data.responses();
        let k = self.k;
        let out = exec::map_indices(m, true, |q| {
            let row = ctx.query_row(&self.data, &queries[q * d..(q + 1) * d], k, &self.tie);
            let mut s = 0.0;
            for cand in &row {
                s += responses[cand.idx as usize];
            }
            s / k as f64
        });
        Ok(out)
    }
}

/// Persistent form of a fitted model: everything needed to rebuild it,
/// plus a checksum tying it to the training CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub k_max: usize,
    pub k_tilde: usize,
    pub k_overridden: bool,
    pub tie_seed: u64,
    pub tie_mode: TieMode,
    pub curve: Vec<f64>,
    pub data_path: String,
    pub data_sha256: String,
}

impl FittedModel {
    pub fn manifest(&self, data_path: String, data_sha256: String) -> ModelManifest {
        ModelManifest {
            format_version: crate::dataset::FORMAT_VERSION,
            n: self.data.len(),
            d: self.data.dim(),
            k: self.k,
            k_max: self.curve.k_max(),
            k_tilde: self.curve.k_tilde(),
            k_overridden: self.k_overridden,
            tie_seed: self.tie.seed,
            tie_mode: self.tie.mode,
            curve: self.curve.values().to_vec(),
            data_path,
            data_sha256,
        }
    }

    /// Reassemble a model from its manifest and the (checksum-verified)
    /// training data. No table is rebuilt; prediction does not need one.
    pub fn from_manifest(manifest: &ModelManifest, data: Dataset) -> Result<Self> {
        if data.len() != manifest.n || data.dim() != manifest.d {
            return Err(Error::DimensionMismatch {
                expected: manifest.d,
                actual: data.dim(),
            });
        }
        let curve = LoocvCurve::from_values(manifest.curve.clone())?;
        Ok(Self {
            data,
            table: None,
            k: manifest.k,
            curve,
            tie: TieRule {
                seed: manifest.tie_seed,
                mode: manifest.tie_mode,
            },
            k_overridden: manifest.k_overridden,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbors::build_table;

    fn line_data() -> Dataset {
        Dataset::from_flat(vec![0.0, 1.0, 3.0], 1, vec![0.0, 1.0, 5.0]).unwrap()
    }

    #[test]
    fn loo_estimates_line() {
        let data = line_data();
        let table = build_table(&data, 2, TieRule::index_order()).unwrap();
        assert_eq!(loo_estimates(&data, &table, 1).unwrap(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn loo_estimates_constant_and_all_but_self() {
        let data = Dataset::from_flat(vec![0.0, 1.0, 2.0, 4.0], 1, vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let table = build_table(&data, 3, TieRule::index_order()).unwrap();
        assert_eq!(loo_estimates(&data, &table, 2).unwrap(), vec![3.0; 4]);

        let data = Dataset::from_flat(vec![0.0, 1.0, 2.0, 4.0], 1, vec![1.0, 2.0, 4.0, 8.0]).unwrap();
        let table = build_table(&data, 3, TieRule::index_order()).unwrap();
        let est = loo_estimates(&data, &table, 3).unwrap();
        let total: f64 = data.responses().iter().sum();
        for (i, &e) in est.iter().enumerate() {
            let expected = (total - data.responses()[i]) / 3.0;
            assert!((e - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_line_values() {
        let data = line_data();
        let table = build_table(&data, 2, TieRule::index_order()).unwrap();
        let curve = loocv_curve(&data, &table).unwrap();
        assert_eq!(curve.values(), &[6.0, 10.5]);
        assert_eq!(curve.k_tilde(), 1);
        assert_eq!(select_k(&curve), 1);
    }

    #[test]
    fn curve_constant_responses() {
        let data = Dataset::from_flat(vec![0.0, 1.0, 3.0], 1, vec![4.0, 4.0, 4.0]).unwrap();
        let table = build_table(&data, 2, TieRule::index_order()).unwrap();
        let curve = loocv_curve(&data, &table).unwrap();
        assert_eq!(curve.values(), &[0.0, 0.0]);
        assert_eq!(curve.k_tilde(), 1);
    }

    #[test]
    fn argmin_tie_rules() {
        assert_eq!(LoocvCurve::from_values(vec![3.0, 3.0, 5.0]).unwrap().k_tilde(), 1);
        assert_eq!(LoocvCurve::from_values(vec![5.0, 2.0, 4.0]).unwrap().k_tilde(), 2);
        assert!(matches!(
            LoocvCurve::from_values(Vec::new()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn fit_selects_and_overrides() {
        let model = fit(line_data(), &FitOptions::default()).unwrap();
        assert_eq!(model.k, 1);
        assert!(!model.k_overridden);

        let model2 = fit(
            line_data(),
            &FitOptions {
                k_override: Some(2),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(model2.k, 2);
        assert!(model2.k_overridden);
        assert_eq!(model2.curve, model.curve);

        let tiny = Dataset::from_flat(vec![0.0, 1.0], 1, vec![0.0, 1.0]).unwrap();
        let model3 = fit(
            tiny,
            &FitOptions {
                k_max: Some(5),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(model3.curve.k_max(), 1);
        assert_eq!(model3.k, 1);
    }

    #[test]
    fn predict_examples() {
        let mut opt = FitOptions::default();
        opt.k_override = Some(1);
        let model = fit(line_data(), &opt).unwrap();
        assert_eq!(model.predict(&[2.4]).unwrap(), vec![5.0]);
        assert_eq!(model.predict(&[1.0]).unwrap(), vec![1.0]);

        let mut opt = FitOptions::default();
        opt.k_override = Some(2); // k = n - 1 here; use full n via query semantics below
        let model = fit(line_data(), &opt).unwrap();
        let got = model.predict(&[100.0]).unwrap()[0];
        assert_eq!(got, (5.0 + 1.0) / 2.0);

        let planar = Dataset::from_flat(vec![0.0, 0.0, 1.0, 1.0, 2.0, 0.5], 2, vec![1.0, 2.0, 3.0])
            .unwrap();
        let model = fit(planar, &FitOptions::default()).unwrap();
        assert!(matches!(
            model.predict(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn streaming_equals_table_bits() {
        let data = Dataset::from_flat(
            (0..40).map(|i| ((i * 37 % 97) as f64) * 0.11).collect(),
            1,
            (0..40).map(|i| ((i * 53 % 89) as f64) * 0.07).collect(),
        )
        .unwrap();
        let tie = TieRule::seeded(5);
        let table = build_table(&data, 39, tie).unwrap();
        let a = loocv_curve(&data, &table).unwrap();
        let b = loocv_curve_streaming(&data, 39, tie, Backend::Auto).unwrap();
        assert_eq!(a, b);
        let c = loocv_curve_seq(&data, &table).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn manifest_roundtrip() {
        let model = fit(line_data(), &FitOptions::default()).unwrap();
        let manifest = model.manifest("data.csv".into(), "abc".into());
        let json = serde_json::to_string(&manifest).unwrap();
        let back: ModelManifest = serde_json::from_str(&json).unwrap();
        let rebuilt = FittedModel::from_manifest(&back, line_data()).unwrap();
        assert_eq!(rebuilt.k, model.k);
        assert_eq!(rebuilt.curve, model.curve);
        assert_eq!(rebuilt.predict(&[2.4]).unwrap(), model.predict(&[2.4]).unwrap());
    }
}
