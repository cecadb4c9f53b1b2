//! The workspace book's code snippets, compiled as doc-tests.
//!
//! mdBook renders `book/src/*.md` for reading; including the same files here
//! makes `cargo test --doc` execute every fenced Rust block, so the guide can
//! never drift from the API.

#[doc = include_str!("../../../book/src/budget-accounting.md")]
pub mod budget_accounting {}

#[doc = include_str!("../../../book/src/perturbed-objectives.md")]
pub mod perturbed_objectives {}

#[doc = include_str!("../../../book/src/memory-and-projection.md")]
pub mod memory_and_projection {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/data-pipeline.md")]
pub mod data_pipeline {}
