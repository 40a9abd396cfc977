//! Bayesian neural-network classifiers trained by mean-field variational
//! inference with a summary-statistic likelihood.
//!
//! The standard ELBO is augmented with a Dirichlet-process likelihood of an
//! observed histogram of predicted class-probability scores `s0`, whose base
//! measure is the model's own (soft) histogram over a finite partition of the
//! prediction space. Everything the objective needs is built here: a small
//! reverse-mode autodiff tape, the probability primitives, partitions and soft
//! histograms, the variational MLP, the Adam training loop and evaluation
//! metrics.

pub mod autodiff;
pub mod bnn;
pub mod data;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod par;
pub mod prior;
pub mod quadrature;
pub mod special;
pub mod summary;
pub mod tensor;
pub mod train;

pub use autodiff::{Gradients, NodeId, Tape, Var};
pub use error::{Error, Result};
pub use tensor::Tensor;
