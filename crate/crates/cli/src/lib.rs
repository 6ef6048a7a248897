//! Scenario files, report writing and experiment orchestration for the
//! `floquet-sep` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod scenario;
