//! Spectral-domain transferable adversarial attacks on 3D point clouds.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`geometry`]: point-cloud data model, synthetic labeled shapes, text I/O
//! - [`spectral`]: KNN graph, Laplacian, Jacobi eigendecomposition, graph
//!   Fourier transform and the fixed low/high frequency mask
//! - [`metrics`]: spatial distortion metrics, the learnable spectral metric
//!   and its mixing weight
//! - [`classifier`]: two small differentiable point-cloud classifiers with
//!   hand-written backprop
//! - [`attack`]: the spectral Admix attack with augmentation-path selection,
//!   plus an iterative sign-gradient baseline
//! - [`defense`]: simple random sampling and statistical outlier removal
//!
//! All numerics are generic over the scalar type via [`Real`]; the type
//! aliases below pin the common `f64` instantiations.

pub mod attack;
pub mod classifier;
pub mod defense;
pub mod geometry;
pub mod mat;
pub mod metrics;
pub mod optim;
pub mod real;
pub mod spectral;

pub use real::Real;

/// `f64` point cloud.
pub type PointCloud64 = geometry::PointCloud<f64>;
/// `f64` labeled dataset.
pub type LabeledDataset64 = geometry::LabeledDataset<f64>;
/// `f64` GFT basis.
pub type GftBasis64 = spectral::GftBasis<f64>;
/// `f64` spectral feature.
pub type SpectralCloud64 = spectral::SpectralCloud<f64>;
/// `f64` classifier.
pub type MiniPointNet64 = classifier::MiniPointNet<f64>;
/// `f64` attack configuration.
pub type AttackConfig64 = attack::AttackConfig<f64>;
