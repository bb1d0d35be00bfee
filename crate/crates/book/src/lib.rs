//! The chapters of the guide in `book/src`, one module each, so that
//! `cargo test --doc` runs every code block in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/observables.md")]
pub mod observables {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/plant.md")]
pub mod plant {}
#[doc = include_str!("../../../book/src/analytics.md")]
pub mod analytics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
