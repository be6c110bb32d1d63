//! Deterministic selection-broadcast cycle runtime.
//!
//! Specialist modules bid content into a single-slot workspace each cycle; a
//! selection policy picks one winner and every module receives it. An
//! episodic memory module learns recurring broadcast sequences and proposes
//! them back as chunks that collapse several cycles into one.

pub mod cli;
pub mod engine;
pub mod memory;
pub mod policy;
pub mod scenario;
pub mod trace;
pub mod types;
