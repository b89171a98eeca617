//! Command-line front end for the `powerpath` toolkit.

pub mod config;
pub mod plotdata;
pub mod run;
