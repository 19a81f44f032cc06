//! k-nearest-neighbor regression with the number of neighbors chosen by
//! leave-one-out cross-validation, plus the machinery to verify that choice:
//! the selector matrix B and Gram matrix A = B'B/n behind the LOOCV curve,
//! their norm diagnostics, and a Monte Carlo harness measuring the gap
//! between the selected k and the exact-MSE optimum on synthetic data.
//!
//! The crate is deterministic end to end: every random draw derives from an
//! explicit seed, tie-breaking among equidistant neighbors is a pure function
//! of seed and geometry, and floating-point reductions use fixed chunk
//! boundaries, so results are bit-identical for any worker-thread count.
//! The `parallel` feature (default) runs the data-parallel loops on rayon;
//! without it the same code paths run sequentially.

pub mod dataset;
pub mod error;
pub mod exec;
pub mod neighbors;
pub mod regress;
pub mod rng;
pub mod spectral;
pub mod verify;

pub use dataset::{
    generate_synthetic, load_csv, load_matrix_csv, Dataset, LabeledDataset, ResponseColumn,
    SyntheticSpec,
};
pub use error::{Error, ErrorClass, Result};
pub use neighbors::{build_table, in_degree, query_neighbors, Backend, NeighborTable, TieRule};
pub use regress::{fit, loocv_curve, select_k, FitOptions, FittedModel, LoocvCurve};
pub use spectral::{build_a, build_b, expected_quadratic_noise, GramMatrix, SelectorMatrix};
pub use verify::{
    adaptivity_probe, decomposition_check, exact_mse, gap_experiment, k_star, ExperimentSpec,
    GapReport,
};

/// Hex SHA-256 of a byte buffer; ties model manifests to their training CSV.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
