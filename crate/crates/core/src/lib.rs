pub mod coldstart;
pub mod dataset;
pub mod dialogue;
pub mod eval;
pub mod llm;
pub mod prompt;
pub mod recsys;
