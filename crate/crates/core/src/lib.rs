//! Repository indexing, agent-directed code search and a Git-checkpointed
//! hypothesis workflow for LLM issue-resolution agents.

pub mod config;
pub mod error;
pub mod fsutil;
pub mod harness;
pub mod index;
pub mod llm;
pub mod localize;
pub mod memory;
pub mod prompts;
pub mod resolve;
pub mod tools;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use index::{index_repository, CodeIndex, CodeUnit, EdgeKind, FileSkeleton, UnitKind};
pub mod search;
pub mod trajectory;
