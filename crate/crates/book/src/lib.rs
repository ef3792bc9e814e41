//! Compiles the guide's code blocks as doc-tests, so `cargo test` keeps
//! the book honest. One module per chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/candidates.md")]
pub mod candidates {}
#[doc = include_str!("../../../book/src/prompts.md")]
pub mod prompts {}
#[doc = include_str!("../../../book/src/dialogue.md")]
pub mod dialogue {}
#[doc = include_str!("../../../book/src/coldstart.md")]
pub mod coldstart {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
