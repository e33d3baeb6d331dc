//! The codelift guide, compiled. Each chapter of `book/` is included as
//! the documentation of a module here, which makes every Rust code block
//! in the book a doc-test: `cargo test -p codelift-book` fails if the
//! guide and the library drift apart. The module names mirror the chapter
//! files so a failing test points straight at the chapter to fix.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/ingesting-notebooks.md")]
pub mod ingesting_notebooks {}

#[doc = include_str!("../../../book/src/static-analysis.md")]
pub mod static_analysis {}

#[doc = include_str!("../../../book/src/dependency-graph.md")]
pub mod dependency_graph {}

#[doc = include_str!("../../../book/src/chat-backends.md")]
pub mod chat_backends {}

#[doc = include_str!("../../../book/src/agent-pipeline.md")]
pub mod agent_pipeline {}

#[doc = include_str!("../../../book/src/emitting-repositories.md")]
pub mod emitting_repositories {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
