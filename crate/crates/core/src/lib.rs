//! Ivanov regularization (the method of quasi-solutions) for the inverse
//! source problem `-Δy + c y = u` with homogeneous Neumann conditions on a
//! rectangle, where the source is sought in an `L∞` ball of radius `rho`.
//!
//! - [`fem`]: P1 finite elements on Friedrichs-Keller meshes and the discrete
//!   forward operator `(K + cM)^{-1} M`.
//! - [`quasisolve`]: damped semismooth Newton method for fixed `rho`.
//! - [`paramchoice`]: discrepancy-principle continuation in `rho`.
//! - [`oracle`]: dense projected-gradient reference solver and distance
//!   function checks.
//! - [`experiment`]: phantom, noise model, error metrics and result files.
//!
//! Everything numerical is generic over [`Real`]; the aliases below fix `f64`.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod io;
pub mod oracle;
pub mod paramchoice;
pub mod quasisolve;
pub mod real;

pub use error::{Error, Result};
pub use fem::{MassKind, Rect};
pub use quasisolve::{ResidualNorm, Termination};
pub use real::Real;

pub type Mesh = fem::Mesh<f64>;
pub type GridFunction = fem::GridFunction<f64>;
pub type SparseSymMatrix = fem::SparseSymMatrix<f64>;
pub type ForwardModel = fem::ForwardModel<f64>;
pub type SsnState = quasisolve::SsnState<f64>;
pub type SsnParams = quasisolve::SsnParams<f64>;
pub type NewtonReport = quasisolve::NewtonReport<f64>;
pub type ChoiceParams = paramchoice::ChoiceParams<f64>;
pub type ChoiceReport = paramchoice::ChoiceReport<f64>;
pub type DenseMatrix = oracle::DenseMatrix<f64>;
pub type DenseOperator = oracle::DenseOperator<f64>;
pub type DenseInstance = oracle::DenseInstance<f64>;
pub type Phantom = experiment::Phantom<f64>;
pub type ErrorRecord = experiment::ErrorRecord<f64>;
pub type ExperimentConfig = experiment::ExperimentConfig<f64>;
