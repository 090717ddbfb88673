//! Bayesian latent-class competing-risk survival analysis.
//!
//! Cohorts are modelled as mixtures of latent classes whose members face
//! independent, proportional-hazards risks. Dependence between risks at the
//! cohort level (informative censoring) then arises only from class
//! heterogeneity, which makes decontaminated cause-specific quantities
//! computable alongside the usual crude ones.
//!
//! * [`cohort`]: ingestion, validation, imputation and z-scoring.
//! * [`hazard`]: model identifiers, spline base hazards, parameter sets.
//! * [`likelihood`]: event densities, log-likelihood and priors.
//! * [`inference`]: MAP fitting, Laplace evidence and model selection.
//! * [`estimators`]: survival, incidence, class assignment and summaries.
//! * [`synthgen`]: synthetic cohorts with known latent structure.

pub mod cli;
pub mod cohort;
pub mod error;
pub mod estimators;
pub mod hazard;
pub mod inference;
pub mod likelihood;
pub mod synthgen;

pub use error::{Error, Result};
