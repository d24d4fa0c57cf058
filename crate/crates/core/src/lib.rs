//! Certified reduced-basis error bounds evaluated through four routes
//! (assembled residual, developed quadratic form, rewritten linear system and
//! EIM interpolation) in single, double and double-word precision.

pub mod dd;
pub mod eim;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod problem;
pub mod rb;
pub mod scalar;
pub mod truth;

pub use eim::{eim_offline, EimConfig, EimState, EimStop, EimVariant};
pub use error::{RbError, Result};
pub use estimators::{BoundReport, Method};
pub use experiments::{bench_online, run_eim_diag, run_perturb, run_sweep, ExperimentConfig};
pub use problem::{ParameterGrid, ProblemView, TruthProblem};
pub use rb::{greedy_build, GreedyConfig, ReducedBasis};
pub use scalar::{Cplx, DoubleWord, Precision, Real, C64};
pub use truth::ProblemSpec;
