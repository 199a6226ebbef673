//! Supply-chain scanner for LLM-generated code.
//!
//! The crate is organized as a pipeline: [`extract`] recovers external
//! component references from response text, [`probe`] observes their
//! real-world status (live or from a recorded fixture archive), [`vulndb`]
//! and [`ci`] add version and workflow analysis, and [`threat`] turns all of
//! that into findings and rates. [`prompt`] drives the prompt sets and the
//! chain-of-confirmation defense, and [`report`] ties a scan together.

pub mod ci;
pub mod domain;
pub mod extract;
pub mod probe;
pub mod prompt;
pub mod report;
pub mod threat;
pub mod vulndb;

pub use extract::{CodeBlock, Extraction, Extractor, Span};

/// Tool version recorded in reports and cache files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
