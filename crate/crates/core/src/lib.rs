//! Weighted spectral-filter fitting of noisy scattered data on the sphere.
//!
//! The pipeline: generate or load a [`geometry::PointSet`], build positive
//! quadrature weights with [`quadrature::compute_weights`], fit with
//! [`estimator::fit_wsfa`] under one of the [`filters`], choose the filter
//! parameter with [`selection::lepskii_select`], or split the work across
//! blocks with [`distributed::dc_fit`].

pub mod analysis;
pub mod distributed;
pub mod error;
pub mod estimator;
pub mod filters;
pub mod geometry;
pub mod harmonics;
pub mod io;
pub mod kernel;
pub mod quadrature;
pub mod selection;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
