//! Compressive recovery of band-limited Wigner D and spherical-harmonic
//! series from samples on an equiangular torus grid.
//!
//! The pipeline maps Wigner coefficients `a` to Fourier coefficients `b`
//! block by block, samples the field through a sub-sampled unitary DFT, and
//! recovers `b` with an ℓ1 program before mapping back to `a`.

pub mod coeffs;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod operator;
pub mod recovery;
pub mod solver;
pub mod special;
pub mod synth;
pub mod transform;
pub mod wigner;

pub use num_complex::Complex64;

pub use coeffs::{Dims, FourierCoefficients, WignerCoefficients};
pub use error::{Error, Result};
pub use experiments::{ExperimentId, ExperimentSpec, Table};
pub use grid::{PhysicalMap, SampleGrid, SampleSelection};
pub use operator::{DftOperator, LinearOperator, MeasurementSet, NoiseSharing};
pub use recovery::{RadiusRule, RecoveryReport};
pub use solver::{SolverConfig, SolverOverrides, SolverResult, SolverStatus};
pub use synth::{Preset, ProbeCase, ProbeResponse, SpeakerModel};
pub use transform::{BasisTransform, InversionReport, SparsityReport};
pub use wigner::{BandLimit, DeltaMatrix, WignerIndex};
