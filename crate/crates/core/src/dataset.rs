//! Data model, CSV ingestion, and synthetic data generation.
//!
//! Designs are fixed: coordinates are drawn (or gridded) once per seed and
//! frozen; only the noise is redrawn by the verification harness.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// n points in d dimensions plus n scalar responses. Immutable after
/// construction; coordinates and responses are validated finite, n >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<f64>, // row-major, n * d
    d: usize,
    responses: Vec<f64>,
}

impl Dataset {
    pub fn from_flat(points: Vec<f64>, d: usize, responses: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::TooFewColumns);
        }
        if points.len() != responses.len() * d {
            return Err(Error::LengthMismatch {
                expected: responses.len() * d,
                actual: points.len(),
            });
        }
        if responses.len() < 2 {
            return Err(Error::TooFewRows {
                n: responses.len(),
            });
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("coordinates".into()));
        }
        if !responses.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("responses".into()));
        }
        Ok(Self {
            points,
            d,
            responses,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: rows.iter().map(|r| r.len()).find(|&l| l != d).unwrap_or(d),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(flat, d, responses)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    /// Same design, different response vector. Used by the harness to swap
    /// noise realizations without copying coordinates.
    pub fn with_responses(&self, responses: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.points.clone(), self.d, responses)
    }
}

/// Which CSV column holds the response. Defaults to the last column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseColumn {
    #[default]
    Last,
    /// 0-based column index.
    Index(usize),
}

/// Parse a strict numeric CSV into rows: comma-separated, UTF-8, optional
/// single header row, decimal-point reals, no quoting. Row/column positions
/// in errors are 1-based and count the header row. Used for query matrices,
/// which have no response column.
pub fn load_matrix_csv(path: &Path, has_header: bool) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let display = path.display().to_string();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_idx, line) in text.lines().enumerate() {
        if line_idx == 0 && has_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::CsvShape {
                path: display,
                row: line_idx + 1,
                expected,
                found: fields.len(),
            });
        }
        let mut row = Vec::with_capacity(fields.len());
        for (col_idx, field) in fields.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::CsvCell {
                path: display.clone(),
                row: line_idx + 1,
                col: col_idx + 1,
                found: field.trim().to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvCell {
                    path: display.clone(),
                    row: line_idx + 1,
                    col: col_idx + 1,
                    found: field.trim().to_string(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Parse a dataset CSV: one response column (default last), the rest
/// coordinates. Needs at least 2 rows and 2 columns.
pub fn load_csv(path: &Path, has_header: bool, response_column: ResponseColumn) -> Result<Dataset> {
    let rows = load_matrix_csv(path, has_header)?;

    if rows.len() < 2 {
        return Err(Error::TooFewRows { n: rows.len() });
    }
    let ncols = rows[0].len();
    if ncols < 2 {
        return Err(Error::TooFewColumns);
    }
    let resp_col = match response_column {
        ResponseColumn::Last => ncols - 1,
        ResponseColumn::Index(c) => {
            if c >= ncols {
                return Err(Error::ResponseColumnOutOfRange { col: c, ncols });
            }
            c
        }
    };

    let mut responses = Vec::with_capacity(rows.len());
    let mut points = Vec::with_capacity(rows.len() * (ncols - 1));
    for row in &rows {
        for (c, &v) in row.iter().enumerate() {
            if c == resp_col {
                responses.push(v);
            } else {
                points.push(v);
            }
        }
    }
    Dataset::from_flat(points, ncols - 1, responses)
}

/// Built-in regression functions for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionFunction {
    /// m(x) = sum_j x_j
    Linear,
    /// m(x) = sum_j sin(pi * x_j)
    LipschitzSine,
    /// m(x) = 1
    Constant,
}

impl RegressionFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RegressionFunction::Linear => x.iter().sum(),
            RegressionFunction::LipschitzSine => {
                x.iter().map(|&v| (std::f64::consts::PI * v).sin()).sum()
            }
            RegressionFunction::Constant => 1.0,
        }
    }
}

/// Noise families. All three satisfy E[exp(eps^2 / K)] <= 2 for a finite K,
/// the moment condition the estimator's guarantees rest on; heavy-tailed
/// families are rejected at spec validation by not existing here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseFamily {
    Gaussian,
    /// Uniform on [-sd*sqrt(3), sd*sqrt(3)] (mean zero, variance sd^2).
    Uniform,
    /// +/- sd with equal probability.
    RademacherScaled,
}

impl NoiseFamily {
    /// Smallest K with E[exp(eps^2/K)] <= 2 for this family at standard
    /// deviation `sd`. Recorded in manifests; no runtime role.
    pub fn sub_gaussian_scale(&self, sd: f64) -> f64 {
        let var = sd * sd;
        match self {
            NoiseFamily::Gaussian => 8.0 * var / 3.0,
            NoiseFamily::Uniform => 3.0 * var / std::f64::consts::LN_2,
            NoiseFamily::RademacherScaled => var / std::f64::consts::LN_2,
        }
    }
}

/// Point design: axis-aligned grid or one frozen uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    Grid,
    UniformRandom,
}

/// Axis-aligned box for the point design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DomainBox {
    pub fn unit(d: usize) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }
}

/// Recipe for a synthetic dataset. Equal specs generate bit-identical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub function_id: RegressionFunction,
    pub noise_sd: f64,
    pub noise_family: NoiseFamily,
    #[serde(default)]
    pub domain: Option<DomainBox>,
    pub design: Design,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::TooFewRows { n: self.n });
        }
        if self.d == 0 {
            return Err(Error::InvalidSpec("d must be >= 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "noise_sd must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        if let Some(domain) = &self.domain {
            if domain.lo.len() != self.d || domain.hi.len() != self.d {
                return Err(Error::DimensionMismatch {
                    expected: self.d,
                    actual: domain.lo.len(),
                });
            }
            if domain
                .lo
                .iter()
                .zip(&domain.hi)
                .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
            {
                return Err(Error::InvalidSpec("domain box must have lo < hi".into()));
            }
        }
        Ok(())
    }

    fn domain_box(&self) -> DomainBox {
        self.domain.clone().unwrap_or_else(|| DomainBox::unit(self.d))
    }
}

/// Grid side length for n points in d dimensions, if n is a perfect d-th power.
fn grid_side(n: usize, d: usize) -> Option<usize> {
    let side = (n as f64).powf(1.0 / d as f64).round() as usize;
    for s in side.saturating_sub(1)..=side + 1 {
        if s.checked_pow(d as u32) == Some(n) {
            return Some(s);
        }
    }
    None
}

/// The frozen coordinate design for a spec (row-major). Grid designs are
/// deterministic; uniform designs are one seeded draw.
pub fn design_points(spec: &SyntheticSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let domain = spec.domain_box();
    match spec.design {
        Design::Grid => {
            let side = grid_side(spec.n, spec.d).ok_or_else(|| {
                let side = (spec.n as f64).powf(1.0 / spec.d as f64);
                let below = (side.floor() as usize).max(2).pow(spec.d as u32);
                let above = (side.ceil() as usize).max(2).pow(spec.d as u32);
                Error::GridSize {
                    n: spec.n,
                    d: spec.d,
                    below,
                    above,
                }
            })?;
            if side < 2 {
                return Err(Error::InvalidSpec(
                    "grid design needs at least 2 points per axis".into(),
                ));
            }
            let mut points = Vec::with_capacity(spec.n * spec.d);
            for i in 0..spec.n {
                let mut rest = i;
                for axis in (0..spec.d).rev() {
                    let digit = rest % side;
                    rest /= side;
                    let t = digit as f64 / (side - 1) as f64;
                    let (lo, hi) = (domain.lo[axis], domain.hi[axis]);
                    points.push(lo + t * (hi - lo));
                }
                // digits were pushed in reverse axis order; restore axis order
                let row = &mut points[i * spec.d..(i + 1) * spec.d];
                row.reverse();
            }
            Ok(points)
        }
        Design::UniformRandom => {
            let mut rng = rng::stream(spec.seed, &[tag::DESIGN]);
            let mut points = Vec::with_capacity(spec.n * spec.d);
            for _ in 0..spec.n {
                for axis in 0..spec.d {
                    let u: f64 = rng.gen();
                    points.push(domain.lo[axis] + u * (domain.hi[axis] - domain.lo[axis]));
                }
            }
            Ok(points)
        }
    }
}

/// One seeded noise vector. A single stream drawn in index order, so the
/// draw is reproducible and independent across i.
pub fn draw_noise(family: NoiseFamily, sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[tag::NOISE]);
    let mut eps = Vec::with_capacity(n);
    match family {
        NoiseFamily::Gaussian => {
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                eps.push(sd * z);
            }
        }
        NoiseFamily::Uniform => {
            let half_width = sd * 3f64.sqrt();
            for _ in 0..n {
                let u: f64 = rng.gen();
                eps.push((2.0 * u - 1.0) * half_width);
            }
        }
        NoiseFamily::RademacherScaled => {
            for _ in 0..n {
                let u: f64 = rng.gen();
                eps.push(if u < 0.5 { sd } else { -sd });
            }
        }
    }
    eps
}

/// Dataset plus the ground truth that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    /// True regression values mu_i = m(x_i); responses - mu are the realized noise.
    pub mu: Vec<f64>,
    pub noise_sd: f64,
    pub function_id: RegressionFunction,
    pub noise_family: NoiseFamily,
    pub seed: u64,
}

/// Deterministic synthetic generation: equal specs give bit-identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    let points = design_points(spec)?;
    let d = spec.d;
    let mu: Vec<f64> = (0..spec.n)
        .map(|i| spec.function_id.eval(&points[i * d..(i + 1) * d]))
        .collect();
    let eps = draw_noise(spec.noise_family, spec.noise_sd, spec.n, spec.seed);
    let responses: Vec<f64> = mu.iter().zip(&eps).map(|(m, e)| m + e).collect();
    Ok(LabeledDataset {
        data: Dataset::from_flat(points, d, responses)?,
        mu,
        noise_sd: spec.noise_sd,
        function_id: spec.function_id,
        noise_family: spec.noise_family,
        seed: spec.seed,
    })
}

/// Sidecar manifest persisted next to a synthetic dataset's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub function_id: RegressionFunction,
    pub noise_sd: f64,
    pub noise_family: NoiseFamily,
    pub seed: u64,
    /// Sub-Gaussian moment scale of the noise family; informational only.
    pub sub_gaussian_k: f64,
}

pub const FORMAT_VERSION: u32 = 1;

impl LabeledDataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            format_version: FORMAT_VERSION,
            n: self.data.len(),
            d: self.data.dim(),
            function_id: self.function_id,
            noise_sd: self.noise_sd,
            noise_family: self.noise_family,
            seed: self.seed,
            sub_gaussian_k: self.noise_family.sub_gaussian_scale(self.noise_sd),
        }
    }

    /// Write `<path>` as CSV (coordinates then response) and
    /// `<path>.manifest.json` with the generation parameters.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut out = String::new();
        let d = self.data.dim();
        for i in 0..self.data.len() {
            for c in 0..d {
                out.push_str(&format!("{:?},", self.data.point(i)[c]));
            }
            out.push_str(&format!("{:?}\n", self.data.responses()[i]));
        }
        fs::write(csv_path, out).map_err(|source| Error::WriteIo {
            path: csv_path.to_path_buf(),
            source,
        })?;
        let manifest_path = manifest_path(csv_path);
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&manifest_path, json).map_err(|source| Error::WriteIo {
            path: manifest_path.clone(),
            source,
        })
    }

    /// Load a CSV + manifest pair; mu is recomputed from the manifest's
    /// function over the stored coordinates.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let manifest_path = manifest_path(csv_path);
        let text = fs::read_to_string(&manifest_path).map_err(|source| Error::Io {
            path: manifest_path.clone(),
            source,
        })?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: manifest_path.display().to_string(),
                message: e.to_string(),
            })?;
        let data = load_csv(csv_path, false, ResponseColumn::Last)?;
        if data.dim() != manifest.d || data.len() != manifest.n {
            return Err(Error::DimensionMismatch {
                expected: manifest.d,
                actual: data.dim(),
            });
        }
        let mu = (0..data.len())
            .map(|i| manifest.function_id.eval(data.point(i)))
            .collect();
        Ok(Self {
            data,
            mu,
            noise_sd: manifest.noise_sd,
            function_id: manifest.function_id,
            noise_family: manifest.noise_family,
            seed: manifest.seed,
        })
    }
}

fn manifest_path(csv_path: &Path) -> std::path::PathBuf {
    let mut os = csv_path.as_os_str().to_os_string();
    os.push(".manifest.json");
    std::path::PathBuf::from(os)
}
