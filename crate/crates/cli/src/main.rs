//! Single-binary CLI: fit/select/predict on CSV datasets, gap-verification
//! experiments, and spectral diagnostics.
//!
//! Exit codes: 0 success, 2 usage, 3 parse/I-O, 4 validation, 5 resource cap.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use knn_loocv::dataset::{load_csv, load_matrix_csv, ResponseColumn};
use knn_loocv::error::ErrorClass;
use knn_loocv::neighbors::{build_table, TieMode, TieRule};
use knn_loocv::regress::{fit, FitOptions, FittedModel, ModelManifest};
use knn_loocv::spectral::diagnostics;
use knn_loocv::verify::{gap_experiment, report_csv, ExperimentSpec};
use knn_loocv::{sha256_hex, Error};

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_RESOURCE: u8 = 5;

#[derive(Parser)]
#[command(
    name = "knn-loocv",
    about = "k-NN regression with leave-one-out cross-validated choice of k",
    version
)]
struct Cli {
    /// Worker threads (default: all cores, or KNN_LOOCV_THREADS).
    /// Results are identical for every thread count.
    #[arg(long, global = true, env = "KNN_LOOCV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the LOOCV curve f(k) and the selected k
    Select(SelectArgs),
    /// Fit a model and save its manifest next to the training data
    Fit(FitArgs),
    /// Predict at query points with a saved model
    Predict(PredictArgs),
    /// Run a gap-verification experiment from a JSON spec
    Verify(VerifyArgs),
    /// Selector/Gram matrix diagnostics for a dataset at a fixed k
    Spectral(SpectralArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV (numeric, comma-separated, no quoting)
    #[arg(long)]
    input: PathBuf,

    /// Treat the first row as a header
    #[arg(long)]
    has_header: bool,

    /// Response column: "last" or a 1-based index
    #[arg(long, default_value = "last")]
    response_col: String,
}

#[derive(Args)]
struct SelectionArgs {
    /// Neighbor depth searched (default n-1; capped with a warning for n > 4096)
    #[arg(long)]
    k_max: Option<usize>,

    /// Seed for random tie-breaking
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// How equal-distance neighbors are ordered
    #[arg(long, value_enum, default_value_t = TieModeArg::Seeded)]
    tie_mode: TieModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieModeArg {
    Seeded,
    Index,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    selection: SelectionArgs,

    /// Write the f(k) curve here (stdout summary is always printed)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Curve file format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    selection: SelectionArgs,

    /// Use this k instead of the LOOCV argmin
    #[arg(long)]
    k: Option<usize>,

    /// Model manifest output path (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model manifest written by `fit`
    #[arg(long)]
    model: PathBuf,

    /// Query points CSV (coordinate columns only)
    #[arg(long)]
    input: PathBuf,

    /// Queries file has a header row
    #[arg(long)]
    has_header: bool,

    /// Training data location, if it moved since `fit`
    #[arg(long)]
    data: Option<PathBuf>,

    /// Predictions CSV (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment spec JSON
    #[arg(long)]
    spec: PathBuf,

    /// Output basename; writes <out>.json and <out>.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectralArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    selection: SelectionArgs,

    /// Neighbor count k for the matrices
    #[arg(long)]
    k: usize,

    /// Relative tolerance for the spectral-norm power iteration
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,

    /// Diagnostic JSON output (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Json { path: String, message: String },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Json { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Parse => EXIT_PARSE,
                ErrorClass::Validation => EXIT_VALIDATION,
                ErrorClass::Resource => EXIT_RESOURCE,
            },
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Json { .. } => EXIT_PARSE,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Select(args) => cmd_select(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Spectral(args) => cmd_spectral(args),
    }
}

fn parse_response_col(raw: &str) -> Result<ResponseColumn, CliError> {
    if raw.eq_ignore_ascii_case("last") {
        return Ok(ResponseColumn::Last);
    }
    match raw.parse::<usize>() {
        Ok(idx) if idx >= 1 => Ok(ResponseColumn::Index(idx - 1)),
        _ => Err(CliError::Usage(format!(
            "--response-col must be \"last\" or a 1-based column index, got {raw:?}"
        ))),
    }
}

fn tie_rule(selection: &SelectionArgs) -> TieRule {
    TieRule {
        seed: selection.seed,
        mode: match selection.tie_mode {
            TieModeArg::Seeded => TieMode::SeededUniform,
            TieModeArg::Index => TieMode::IndexOrder,
        },
    }
}

/// Default k_max: the full range n-1, capped at ceil(n^(2/3)) with a warning
/// once full tables stop being affordable.
fn resolve_k_max(requested: Option<usize>, n: usize) -> usize {
    match requested {
        Some(k) => k.clamp(1, n - 1),
        None => {
            if n <= 4096 {
                n - 1
            } else {
                let capped = (n as f64).powf(2.0 / 3.0).ceil() as usize;
                eprintln!(
                    "warning: n = {n} is large; searching k in 1..={capped} \
                     (pass --k-max to override)"
                );
                capped.clamp(1, n - 1)
            }
        }
    }
}

fn write_out(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn curve_csv(curve: &knn_loocv::LoocvCurve) -> String {
    let mut out = String::from("k,f\n");
    for (idx, v) in curve.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", idx + 1, v));
    }
    out
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    let response_col = parse_response_col(&args.data.response_col)?;
    let data = load_csv(&args.data.input, args.data.has_header, response_col)?;
    let options = FitOptions {
        k_max: Some(resolve_k_max(args.selection.k_max, data.len())),
        tie: tie_rule(&args.selection),
        ..FitOptions::default()
    };
    let model = fit(data, &options)?;
    if let Some(out) = &args.out {
        let contents = match args.format {
            Format::Csv => curve_csv(&model.curve),
            Format::Json => serde_json::json!({
                "format_version": knn_loocv::dataset::FORMAT_VERSION,
                "n": model.data.len(),
                "k_max": model.curve.k_max(),
                "k_tilde": model.curve.k_tilde(),
                "f": model.curve.values(),
            })
            .to_string(),
        };
        write_out(out, &contents)?;
    }
    println!("k_tilde = {}", model.curve.k_tilde());
    println!(
        "f(k_tilde) = {}",
        model.curve.values()[model.curve.k_tilde() - 1]
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let response_col = parse_response_col(&args.data.response_col)?;
    let data = load_csv(&args.data.input, args.data.has_header, response_col)?;
    let bytes = fs::read(&args.data.input).map_err(|source| CliError::Io {
        path: args.data.input.clone(),
        source,
    })?;
    let options = FitOptions {
        k_max: Some(resolve_k_max(args.selection.k_max, data.len())),
        tie: tie_rule(&args.selection),
        k_override: args.k,
        ..FitOptions::default()
    };
    let model = fit(data, &options)?;
    let manifest = model.manifest(args.data.input.display().to_string(), sha256_hex(&bytes));
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_out(&args.out, &json)?;
    println!("k = {} (k_tilde = {})", model.k, model.curve.k_tilde());
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Locate the training CSV for a manifest: explicit override, the recorded
/// path, then the recorded file name next to the model.
fn resolve_data_path(
    manifest: &ModelManifest,
    model_path: &Path,
    explicit: Option<PathBuf>,
) -> PathBuf {
    if let Some(p) = explicit {
        return p;
    }
    let recorded = PathBuf::from(&manifest.data_path);
    if recorded.exists() {
        return recorded;
    }
    if let (Some(dir), Some(name)) = (model_path.parent(), recorded.file_name()) {
        let sibling = dir.join(name);
        if sibling.exists() {
            return sibling;
        }
    }
    recorded
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.model).map_err(|source| CliError::Io {
        path: args.model.clone(),
        source,
    })?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: args.model.display().to_string(),
        message: e.to_string(),
    })?;

    let data_path = resolve_data_path(&manifest, &args.model, args.data);
    let bytes = fs::read(&data_path).map_err(|source| CliError::Io {
        path: data_path.clone(),
        source,
    })?;
    if sha256_hex(&bytes) != manifest.data_sha256 {
        return Err(Error::ChecksumMismatch {
            path: data_path.display().to_string(),
        }
        .into());
    }
    let data = load_csv(&data_path, false, ResponseColumn::Last)?;
    let model = FittedModel::from_manifest(&manifest, data)?;

    let rows = load_matrix_csv(&args.input, args.has_header)?;
    if rows.is_empty() {
        return Err(Error::Empty("query file").into());
    }
    if rows[0].len() != manifest.d {
        return Err(Error::DimensionMismatch {
            expected: manifest.d,
            actual: rows[0].len(),
        }
        .into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let predictions = model.predict(&flat)?;

    let mut out = String::from("prediction\n");
    for p in &predictions {
        out.push_str(&format!("{p}\n"));
    }
    match &args.out {
        Some(path) => write_out(path, &out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec).map_err(|source| CliError::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: args.spec.display().to_string(),
        message: e.to_string(),
    })?;

    let report = gap_experiment(&spec)?;

    let json_path = args.out.with_extension("json");
    let csv_path = args.out.with_extension("csv");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_out(&json_path, &json)?;
    write_out(&csv_path, &report_csv(&report))?;

    for s in &report.summaries {
        println!(
            "n = {:6}  k_max = {:5}  median gap = {:.6e}  median ratio = {:.4}  gap*sqrt(n/ln n) = {:.6e}",
            s.n, s.k_max, s.median_gap, s.median_ratio, s.scaled_median_gap
        );
    }
    println!(
        "report written to {} and {}",
        json_path.display(),
        csv_path.display()
    );

    if report.partial {
        let first = &report.skipped[0];
        return Err(Error::ResourceCap {
            needed: first.needed_cells,
            cap: first.cap,
        }
        .into());
    }
    Ok(())
}

fn cmd_spectral(args: SpectralArgs) -> Result<(), CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Usage(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }
    let response_col = parse_response_col(&args.data.response_col)?;
    let data = load_csv(&args.data.input, args.data.has_header, response_col)?;
    if args.k < 1 || args.k > data.len() - 1 {
        return Err(Error::KOutOfRange {
            k: args.k,
            k_max: data.len() - 1,
        }
        .into());
    }
    let k_max = args.selection.k_max.unwrap_or(args.k).clamp(args.k, data.len() - 1);
    let table = build_table(&data, k_max, tie_rule(&args.selection))?;
    let report = diagnostics(&table, data.dim(), args.k, args.tol)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => {
            write_out(path, &json)?;
            println!("diagnostics written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}
