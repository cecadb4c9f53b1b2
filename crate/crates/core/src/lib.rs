//! Differentially private lifelong learning.
//!
//! This crate trains a stream of classification tasks under a privacy budget
//! that stays fixed no matter how many tasks arrive. The mechanism perturbs
//! the coefficients of Taylor-polynomial training objectives with a single
//! draw of Laplace noise, keeps an episodic memory of fixed disjoint data
//! batches, and constrains each update with the A-gem gradient projection so
//! that learning new tasks does not destroy old ones.
//!
//! The pieces:
//!
//! * [`privacy`] — Laplace sampling, sensitivity bounds, and the two budget
//!   accountants (fixed lifelong budget vs. naive per-task composition).
//! * [`model`] — the auto-encoder + classifier network, its polynomial
//!   objectives, their perturbed forms, and closed-form gradients.
//! * [`memory`] — disjoint batch partitions and the episodic memory.
//! * [`trainer`] — the streaming training loops, gradient projection, epoch
//!   scheduling, and the noisy-gradient baseline.
//! * [`data`] — synthetic task generators, normalization, and windowing.
//! * [`eval`] — average accuracy, average forgetting, and significance tests.
//!
//! The `book/` directory at the workspace root walks through the concepts;
//! its code snippets are compiled as doc-tests via the [`guide`] module.

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod memory;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod trainer;

mod guide;

pub use error::{Error, Result};
