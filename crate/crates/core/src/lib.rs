//! Topological-derivative imaging of a small elastic inclusion from boundary data.
//!
//! The library synthesizes leading-order boundary measurements for a single
//! small inclusion in a homogeneous isotropic elastic background, backpropagates
//! them with elastodynamic Green kernels (full or mode-separated), and evaluates
//! topological-derivative imaging functionals together with their closed-form
//! peak, resolution, and noise-statistics predictions.
//!
//! Layering, bottom to top:
//! - [`scalar_waves`]: scalar Helmholtz Green functions (2D/3D) and their
//!   Cartesian derivative tensors up to order 4.
//! - [`kupradze`]: the elastodynamic fundamental tensor, its P/S split,
//!   gradient and Hessian kernels.
//! - [`elastic_moment`]: rank-4 elastic moment tensor algebra.
//! - [`scene`]: medium/inclusion description, boundary quadrature grids,
//!   plane-wave probes and direction sets.
//! - [`forward`]: filtered boundary data synthesis and measurement noise.
//! - [`backprop`]: single-layer backpropagation into the search domain,
//!   Helmholtz–Kirchhoff checks, medium-noise speckle fields.
//! - [`imaging`]: the imaging functionals and their closed-form predictions.
//! - [`noise_stats`]: Monte Carlo ensembles, covariance/SNR/FWHM estimators.
//! - [`config`], [`io`], [`rng`]: experiment configuration, file formats,
//!   deterministic seed streams for the CLI.

pub mod backprop;
pub mod config;
pub mod elastic_moment;
pub mod error;
pub mod forward;
pub mod geom;
pub mod imaging;
pub mod io;
pub mod kupradze;
pub mod noise_stats;
pub mod rng;
pub mod scalar_waves;
pub mod scene;

pub use error::{Error, Result};

/// Complex double-precision scalar used throughout.
pub type C64 = num_complex::Complex64;
