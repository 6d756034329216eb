//! Federated weighted least-squares over noisy links.
//!
//! Clients hold private linear-regression data and cooperate through a server to solve the
//! global weighted least-squares problem with dual-free ADMM. Only a random subset of
//! clients talks to the server in each round and every transmission is corrupted by
//! additive Gaussian noise.
//!
//! * [`dataset`]: synthetic problems and the closed-form optimum
//! * [`channel`]: client scheduling and link noise
//! * [`algorithms`]: the four algorithm variants
//! * [`theory`]: mean and mean-square analysis
//! * [`harness`]: Monte Carlo experiments and theory-vs-simulation comparison
//! * [`cli`]: command-line front end and figure presets

use openblas_src as _;

pub mod algorithms;
pub mod channel;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
