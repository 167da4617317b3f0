//! Sequential defend-attack games as hybrid influence diagrams.

pub mod discretize;
pub mod dynamic;
pub mod expr;
pub mod infer;
pub mod io;
pub mod model;
pub mod solver;
#[cfg(feature = "service")]
pub mod service;
