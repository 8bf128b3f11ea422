//! Crowdsourced fault localization: bug corpus, question generation,
//! microtask orchestration, answer aggregation, subcrowd filters and a
//! calibrated crowd simulator.

pub mod aggregation;
pub mod analysis;
pub mod answers;
pub mod corpus;
pub mod filters;
pub mod orchestrator;
pub mod questions;
pub mod simulator;
pub mod stats;
