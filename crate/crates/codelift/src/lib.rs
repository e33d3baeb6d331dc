//! codelift turns exploratory Jupyter notebooks into structured Python
//! repositories. It parses the notebook, derives a def/use dependency graph
//! over the code cells, and then drives a three-stage agent pipeline
//! (architect, developer, structure) over an OpenAI-compatible chat backend
//! — or a deterministic scripted backend for offline runs.

pub mod agents;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod graph;
pub mod ingest;
pub mod llm;
pub mod offline;
pub mod pipeline;
pub mod prompts;
pub mod sandbox;
