//! Metamorphic relation refinement.
//!
//! A campaign fuzzes operand pairs ([`tdg`]), runs every function of the
//! system under test on each pair and its relation-transformed follow-ups
//! ([`harness`]), summarises violation rates per (function, relation) cell
//! ([`analyser`]), mines the input conditions under which mixed cells violate
//! ([`arm`], [`refine`]) and emits a regression suite of positive and negative
//! metamorphic tests ([`suite`]).

pub mod analyser;
pub mod arm;
pub mod error;
pub mod harness;
pub mod manifest;
pub mod mr;
pub mod ratio;
pub mod refine;
pub mod suite;
pub mod tdg;

pub use error::{Error, Result};
pub use mr::{Value, Verdict};
