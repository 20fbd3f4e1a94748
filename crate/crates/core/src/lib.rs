//! Simulation and bias-corrected estimation of cross-trait polygenic risk score
//! genetic correlation.
//!
//! The pipeline is: simulate genotypes and phenotypes ([`synth`]), run marginal
//! association scans ([`gwas`]), build risk scores ([`prs`]), compute raw cosine
//! estimators and divide by their asymptotic bias factors ([`estimators`]). The
//! [`moments`] module evaluates closed-form expectations of the quadratic forms
//! involved and checks them by Monte Carlo, and [`experiments`] runs whole
//! simulation studies. File formats live in [`io`].
//!
//! Numeric kernels and estimators are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod genotype;
pub mod gwas;
pub mod io;
pub mod kernels;
pub mod moments;
pub mod prs;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use genotype::GenotypeMatrix;
pub use scalar::Scalar;

/// Summary statistics in double precision.
pub type SummaryStats64 = gwas::SummaryStats<f64>;
/// Design metadata in double precision.
pub type DesignMeta64 = estimators::DesignMeta<f64>;
/// Corrected estimate in double precision.
pub type CorrelationEstimate64 = estimators::CorrelationEstimate<f64>;
/// Risk score vector in double precision.
pub type PrsVector64 = prs::PrsVector<f64>;
