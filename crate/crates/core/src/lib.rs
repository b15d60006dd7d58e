//! ANOVA-GP surrogate modeling for expensive parametric simulators.
//!
//! The pipeline has three stages:
//!
//! 1. [`anova::adaptive_decompose`] splits the simulator into low-order
//!    anchored ANOVA terms, scoring candidates with Clenshaw–Curtis
//!    tensor quadrature ([`quadrature`]).
//! 2. For every selected term, [`pca::fit_pca`] compresses the
//!    high-dimensional term output and [`gp::train_gp`] fits one
//!    Gaussian process per retained mode. Training sets are grown by
//!    maximum-variance active selection ([`emulator::train_local`]).
//! 3. [`emulator::assemble`] sums the anchor output and the local
//!    emulators into an [`emulator::AnovaGpEmulator`].
//!
//! A plain PCA + GP baseline ([`emulator::train_sgp`]), a Q1 finite
//! element diffusion simulator and a bank of analytic simulators
//! ([`simulators`]) and a seeded experiment harness ([`experiment`])
//! round things out.

pub mod anova;
pub mod emulator;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod pca;
pub mod quadrature;
pub mod seed;
pub mod simulators;

pub use anova::{AnovaIndex, AnchorPoint, Decomposition, IndexSelection, SimCache, TermDataset};
pub use emulator::{AnovaGpEmulator, EmulatorArchive, LocalGpEmulator, SgpEmulator};
pub use error::{Error, Result};
pub use gp::{GpConfig, GpModel, Hyperparameters};
pub use pca::PcaModel;
pub use quadrature::{QuadratureRule1D, TensorQuadrature};
pub use simulators::{InputSpace, Simulator, UniformMarginal};
