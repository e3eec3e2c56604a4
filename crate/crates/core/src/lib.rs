//! Linear interacting SDE networks on a core/periphery split, their
//! partial mean-field approximations, explicit error rates, a directed
//! preferential-attachment generator and large-deviation probes.
//!
//! Numerical code is generic over [`Scalar`]; the `*64` aliases below fix
//! it to `f64`, which is what the CLI and the test suites use.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expm;
pub mod graphgen;
pub mod ldp;
pub mod network;
pub mod noise;
pub mod presets;
pub mod rates;
pub mod scalar;
pub mod simulate;
pub mod sparse;

pub use config::NetworkConfig;
pub use error::{Error, Result};
pub use graphgen::{pa_generate, DegreeKind, PAGraph, PAParams};
pub use ldp::{AtomicMeasure, GammaRule, KernelSet, LDConfig};
pub use network::{CoefficientSet, CorePeripheryLayout, MatrixRole, VQuantities};
pub use noise::{DriftDensity, LevySpec, NoiseModel};
pub use rates::{theorem_bound, RateReport};
pub use scalar::Scalar;
pub use simulate::{estimate_error, ErrorEstimate, SimConfig};
pub use sparse::SparseMatrix;

pub type SparseMatrix64 = SparseMatrix<f64>;
pub type CoefficientSet64 = CoefficientSet<f64>;
pub type NoiseModel64 = NoiseModel<f64>;
pub type LevySpec64 = LevySpec<f64>;
pub type DriftDensity64 = DriftDensity<f64>;
pub type VQuantities64 = VQuantities<f64>;
pub type RateReport64 = RateReport<f64>;
pub type AtomicMeasure64 = AtomicMeasure<f64>;
pub type LDConfig64 = LDConfig<f64>;
pub type KernelSet64 = KernelSet<f64>;
