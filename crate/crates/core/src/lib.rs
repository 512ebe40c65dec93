//! Filtering, smoothing, parameter estimation and forecasting for discrete
//! factorial hidden Markov models whose emission likelihood factorizes over
//! a factor graph.
//!
//! Two families of inference routines are provided:
//!
//! * [`exact`] works on the flattened state space `X^V` and is only usable
//!   for small models. It doubles as ground truth, together with a
//!   brute-force trajectory enumerator.
//! * [`graph_inference`] runs the localized Graph Filter and Graph Smoother.
//!   Posteriors are kept as products of per-block tables over a partition of
//!   the variables, and each block's Bayes update only looks at the
//!   likelihood factors within graph radius `m` of the block.
//!
//! [`em`] builds an approximate Baum-Welch loop on top of the Graph Smoother
//! for the homogeneous Gaussian-chain model, and [`forecast`] turns filter and
//! smoother output into emission means.

pub mod distributions;
pub mod em;
pub mod error;
pub mod exact;
pub mod factor_graph;
pub mod forecast;
pub mod graph_inference;
pub mod io;
pub mod model;

pub use distributions::{DenseTable, FactorizedDistribution};
pub use error::{Error, Result};
pub use factor_graph::{FactorGraph, Partition, Vertex};
pub use model::{EmissionModel, FhmmModel, GaussianEmission, ObservationSequence};
