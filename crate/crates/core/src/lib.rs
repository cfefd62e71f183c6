//! Specification-centric automated program repair.
//!
//! The engine repairs a buggy program in three phases: translate each buggy
//! function into a six-field behavior specification (transformation), repair
//! the specification with chain-of-thought prompting and an optional
//! evidence-gathering agent (repair), then regenerate code from the fixed
//! specification and validate it against the test suite under a hard
//! attempt/feedback-round budget (generation).

pub mod agent;
pub mod analysis;
pub mod diff;
pub mod gateway;
pub mod model;
pub mod orchestrator;
pub mod pipeline;
pub mod repair;
pub mod spec_text;
pub mod templates;
pub mod transform;
