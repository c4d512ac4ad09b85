//! Command-line experiment runner for `geqhom`: JSON configs in, CSV and
//! JSON artifacts plus a manifest out.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
