//! Command-line and HTTP front ends. Both serialize results through
//! `argus_core::io::to_json`, so identical inputs give identical bytes.

pub mod cli;
pub mod http;
