//! Selection-governance pipeline and adversarial evaluation harness.
//!
//! A governed pipeline — candidate expansion and freezing, an unconstrained
//! scoring agent, a six-stage reducer holding sole selection authority, a
//! presentation gate, and a circuit breaker — evaluated on a grid of
//! ablations and attacks with commit-reveal entropy and JSONL audit logs.

pub mod breaker;
pub mod cefl;
pub mod config;
pub mod domain;
pub mod entropy;
pub mod gate;
pub mod harness;
pub mod metrics;
pub mod record;
pub mod reducer;
pub mod report;
pub mod scorer;
pub mod verify;
