//! The chapters of the book under `book/src`, one module each, so that
//! `cargo test -p emac-guide` runs every example in the book.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/signal-model.md")]
pub mod signal_model {}

#[doc = include_str!("../../../book/src/enhanced-matrix.md")]
pub mod enhanced_matrix {}

#[doc = include_str!("../../../book/src/recovery.md")]
pub mod recovery {}

#[doc = include_str!("../../../book/src/incoherence.md")]
pub mod incoherence {}

#[doc = include_str!("../../../book/src/certificates.md")]
pub mod certificates {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}
