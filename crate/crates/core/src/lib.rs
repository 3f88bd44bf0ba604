//! Multi-view regularized Gaussian process classifiers.
//!
//! Each view of the data gets its own exact GP regression model on `±1`
//! labels. The views are trained jointly by minimizing a weighted sum of their
//! negative log marginal likelihoods plus a symmetrized KL penalty between
//! their latent posteriors, optionally restricted to a consistent subset of
//! the training rows.
//!
//! * [`dataset`] loads, validates and splits multi-view CSV data.
//! * [`kernel`] and [`gp_view`] implement the single-view GP.
//! * [`divergence`] provides closed-form Gaussian KL terms and gradients.
//! * [`objective`] assembles the multi-view objective and its gradient.
//! * [`trainer`] runs the optimizer, grid search and full training pipelines.
//! * [`experiment`] runs the repeated train/test benchmark.
//! * [`persist`] reads and writes model files.
//! * [`cli`] is the `mvgp` command-line tool.

pub mod cli;
pub mod dataset;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod gp_view;
pub mod gradcheck;
pub mod kernel;
pub mod linalg;
pub mod objective;
pub mod persist;
pub mod trainer;

pub use dataset::{LabelColumn, MultiViewDataset, SplitSpec};
pub use error::{Error, ErrorKind, Result};
pub use gp_view::{GaussianPosterior, PredictiveGaussian, ViewHyperparams};
pub use kernel::KernelParams;
pub use objective::{ObjectiveState, TradeoffParams};
