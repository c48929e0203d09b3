//! The `hypothesis_plan` and `hypothesis_git` tool families and their
//! command-line dispatcher.

pub mod cli;
pub mod git;
pub mod plan;
