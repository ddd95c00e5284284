//! Step-level prover training on a toy equational calculus.
//!
//! The crate is `no_std` with `alloc`. It contains the rewriting kernel,
//! the hashed-feature softmax tactic policy, best-first proof search,
//! utility labeling and data extraction, the SFT and preference-loss
//! family with analytic gradients, and the benchmark generator. IO, file
//! formats, parallel drivers and the CLI live in the `stepprover` crate.

#![no_std]

extern crate alloc;

pub mod bench;
pub mod curation;
pub mod error;
pub mod kernel;
pub mod policy;
pub mod search;
pub mod term;
pub mod training;

pub use error::{Error, KernelError, KernelErrorKind, Result};
pub use kernel::{apply_tactic, fixed_axioms, replay, Direction, GoalPath, ProofState, RuleId, Tactic};
pub use policy::{PolicyParams, ScoredSample, Token, TokenSequence};
pub use term::{parse_term, Term};
