//! Instrumental-variable estimation of direct and spillover effects in
//! two-unit households under imperfect compliance.
//!
//! The crate is organized bottom-up: [`model`] holds the potential-outcome
//! vocabulary, [`ingest`] reads data, [`moments`] builds the stacked moment
//! vector with its cluster-robust covariance, [`estimators`] maps moments to
//! estimands, and [`oracle`] computes exact population values and simulates
//! data to check everything against. [`cli`] ties them into a command-line tool.

pub mod cli;
pub mod estimators;
pub mod ingest;
pub mod model;
pub mod moments;
pub mod oracle;
