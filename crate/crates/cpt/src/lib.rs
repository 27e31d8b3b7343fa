//! Continual pre-training at desk scale.
//!
//! Building blocks for studying learning-rate schedules under sequential
//! distribution shift: infinite cosine and repeated cosine schedules
//! (`schedule`), multi-task timelines with pre-annealed/annealed checkpoint
//! forking (`timeline`, `checkpoint`), replay-buffer policies (`replay`), a
//! tiny masked-reconstruction model with analytic gradients plus continual
//! baselines (`model`), the forgetting metric suite (`metrics`), and a config
//! driven experiment harness (`config`, `trainer`, `runner`).

pub mod error;
pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod probe;
pub mod replay;
pub mod rng;
pub mod runner;
pub mod synthetic;
pub mod timeline;
pub mod trainer;
pub mod schedule;

pub use error::{CptError, Result};
