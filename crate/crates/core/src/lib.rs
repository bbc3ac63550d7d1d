//! Variational Bayesian model averaging for latent Gaussian regression.
//!
//! Probit, tobit, STAR and Poisson log-normal outcomes share one latent
//! Gaussian regression `z = α + X_k β + ε`. Each model is fitted by mean-field
//! CAVI ([`cavi`]), scored by the VBC or the ELBO ([`evidence`]), and the model
//! space is enumerated or explored by Metropolis–Hastings ([`explorer`]).
//!
//! The numeric core is generic over [`scalar::Real`] (`f64` or `f32`); the
//! aliases below fix the scalar type.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavi;
pub mod data;
pub mod error;
pub mod evidence;
pub mod explorer;
pub mod latent;
pub mod linalg;
pub mod model_space;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod truncnorm;

pub use data::Family;
pub use error::{Error, Result};
pub use evidence::{Criterion, Method};
pub use model_space::{ModelIndex, ModelPriorSpec};

pub type Dataset = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type CrossProducts = data::CrossProducts<f64>;
pub type CrossProductsF32 = data::CrossProducts<f32>;
pub type VariationalState = cavi::VariationalState<f64>;
pub type VariationalStateF32 = cavi::VariationalState<f32>;
pub type Evaluator<'a> = evidence::Evaluator<'a, f64>;
pub type EvaluatorF32<'a> = evidence::Evaluator<'a, f32>;
pub type NullCache = evidence::NullCache<f64>;
pub type SimData = sim::SimData<f64>;
