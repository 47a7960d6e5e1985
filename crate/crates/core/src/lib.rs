//! Multiple kernel learning for kernel ridge regression and SVM.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod manifold;
pub mod mkl;
pub mod scalar;
pub mod svm;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
pub type BaseKernelBank = kernels::BaseKernelBank<f64>;
pub type CombinationParams = kernels::CombinationParams<f64>;
pub type FeasibleRegion = mkl::FeasibleRegion<f64>;
pub type SolverConfig = mkl::SolverConfig<f64>;
pub type SolveResult = mkl::SolveResult<f64>;
pub type KrrModel = krr::KrrModel<f64>;
pub type SvmDualSolution = svm::SvmDualSolution<f64>;
pub type CurvatureConstants = bounds::CurvatureConstants<f64>;
