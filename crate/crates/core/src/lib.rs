//! Quadratic spline wavelets with short support on `(0,1)^d` satisfying
//! homogeneous Dirichlet boundary conditions, together with the machinery to
//! use them for Helmholtz problems `-eps Δu + a u = f`: refinement and dual
//! matrices, fast multiscale transforms, matrix-free diagonally
//! preconditioned operators, Lanczos condition estimates, a multilevel
//! Galerkin solver and a simple adaptive solver.
//!
//! All numerical code is generic over [`Real`] (`f32`/`f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod adaptive;
pub mod basis;
pub mod dense;
pub mod error;
pub mod gram;
pub mod problems;
pub mod refinement;
pub mod scalar;
pub mod solver;
pub mod spline;
pub mod tensor;

pub use error::{Result, WaveletError};
pub use scalar::Real;

pub type PiecewisePoly64 = spline::PiecewisePoly<f64>;
pub type QuadratureRule64 = spline::QuadratureRule<f64>;
pub type DenseMatrix64 = dense::DenseMatrix<f64>;
pub type BandMatrix64 = gram::BandMatrix<f64>;
pub type RefinementPair64 = refinement::RefinementPair<f64>;
pub type DualPair64 = refinement::DualPair<f64>;
pub type HelmholtzOperator64 = tensor::HelmholtzOperator<f64>;
pub type ManufacturedProblem64 = problems::ManufacturedProblem<f64>;
pub type CgReport64 = solver::CgReport<f64>;
pub type MultilevelReport64 = solver::MultilevelReport<f64>;
pub type AdaptiveSolver64 = adaptive::AdaptiveSolver<f64>;
