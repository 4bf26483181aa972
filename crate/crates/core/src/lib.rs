//! Incremental verification engine for MiniSpec, a small Dafny-like
//! language.
//!
//! Programs are split into entities (function definitions, method
//! specifications and method bodies). Each entity is fingerprinted, checked
//! by a modular bounded prover, and its verdict cached under a dependency
//! checksum so that an edit only re-verifies what it can affect.

pub mod cache;
pub mod clock;
pub mod fingerprint;
pub mod lang;
pub mod orchestrator;
pub mod prover;
pub mod replay;
pub mod service;
