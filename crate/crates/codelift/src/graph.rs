//! The cell dependency graph: the shared medium every pipeline stage
//! reads from and writes back to.
//!
//! Nodes are cleaned code cells keyed by their notebook index. An edge
//! `(p, c)` means cell `c` reads a name whose latest earlier definition is
//! in cell `p` — the notebook's top-to-bottom execution order decides
//! which definition wins. Stage outputs (the architect's ADR, the
//! developer's refactored source) live on the nodes in write-once slots.

use std::collections::{BTreeMap, BTreeSet};

use crate::agents::AdrRecord;
use crate::analysis::{extract_bindings, BindingSet, SyntaxDiagnosis};
use crate::ingest::CleanCell;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{} cell(s) failed to parse: {}", .0.len(), format_unparseable(.0))]
    UnparseableCells(Vec<(usize, SyntaxDiagnosis)>),
    #[error("graph has no cell {0}")]
    UnknownNode(usize),
    #[error("cell {id}: {slot} is already set")]
    SlotAlreadySet { id: usize, slot: &'static str },
}

fn format_unparseable(cells: &[(usize, SyntaxDiagnosis)]) -> String {
    cells
        .iter()
        .map(|(id, d)| format!("cell {id}: {d}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// One code cell in the graph.
#[derive(Debug, Clone)]
pub struct CellNode {
    /// The cell's index in the source notebook.
    pub id: usize,
    /// Cleaned source (comments and magics already removed).
    pub source: String,
    pub bindings: BindingSet,
    /// Architect output; write-once via [`DependencyGraph::set_adr`].
    pub adr: Option<AdrRecord>,
    /// Developer output; write-once via
    /// [`DependencyGraph::set_refactored`].
    pub refactored: Option<String>,
}

impl CellNode {
    /// The node's current best source: refactored if present, otherwise
    /// the original.
    pub fn current_source(&self) -> &str {
        self.refactored.as_deref().unwrap_or(&self.source)
    }
}

/// Def/use dependency graph over a notebook's code cells.
#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    nodes: BTreeMap<usize, CellNode>,
    /// `(parent, child)` pairs; parent id is always less than child id.
    edges: BTreeSet<(usize, usize)>,
    /// Names some cell reads that no earlier cell defines (library names,
    /// builtins, true unknowns).
    externals: BTreeSet<String>,
}

/// Builds the graph from cleaned cells. Every cell must parse; the error
/// carries all failing cells at once so a caller can report them together.
pub fn build_graph(cells: &[CleanCell]) -> Result<DependencyGraph, GraphError> {
    let mut failures = Vec::new();
    let mut nodes = BTreeMap::new();
    for cell in cells {
        match extract_bindings(&cell.source) {
            Ok(bindings) => {
                nodes.insert(
                    cell.index,
                    CellNode {
                        id: cell.index,
                        source: cell.source.clone(),
                        bindings,
                        adr: None,
                        refactored: None,
                    },
                );
            }
            Err(diagnosis) => failures.push((cell.index, diagnosis)),
        }
    }
    if !failures.is_empty() {
        return Err(GraphError::UnparseableCells(failures));
    }

    let ids: Vec<usize> = nodes.keys().copied().collect();
    let mut edges = BTreeSet::new();
    let mut externals = BTreeSet::new();
    for &child in &ids {
        let used: Vec<String> = nodes[&child].bindings.used.iter().cloned().collect();
        for name in used {
            // Latest definition before this cell wins.
            let parent = ids
                .iter()
                .copied()
                .filter(|&p| p < child && nodes[&p].bindings.defined.contains(&name))
                .max();
            match parent {
                Some(p) => {
                    edges.insert((p, child));
                }
                None => {
                    externals.insert(name);
                }
            }
        }
    }

    Ok(DependencyGraph {
        nodes,
        edges,
        externals,
    })
}

impl DependencyGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids in ascending order. Because edges always point from a
    /// lower id to a higher one, this order is topological.
    pub fn ids(&self) -> Vec<usize> {
        self.nodes.keys().copied().collect()
    }

    pub fn node(&self, id: usize) -> Result<&CellNode, GraphError> {
        self.nodes.get(&id).ok_or(GraphError::UnknownNode(id))
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &CellNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn externals(&self) -> &BTreeSet<String> {
        &self.externals
    }

    /// Direct parents of a cell.
    pub fn parents_of(&self, id: usize) -> BTreeSet<usize> {
        self.edges
            .iter()
            .filter(|(_, c)| *c == id)
            .map(|(p, _)| *p)
            .collect()
    }

    /// All transitive parents of a cell, excluding the cell itself.
    pub fn ancestors(&self, id: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.node(id)?;
        let mut seen = BTreeSet::new();
        let mut queue: Vec<usize> = self.parents_of(id).into_iter().collect();
        while let Some(next) = queue.pop() {
            if seen.insert(next) {
                queue.extend(self.parents_of(next));
            }
        }
        Ok(seen)
    }

    /// Stores the architect's output for a cell. Each slot can be written
    /// exactly once.
    pub fn set_adr(&mut self, id: usize, record: AdrRecord) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(&id)
            .ok_or(GraphError::UnknownNode(id))?;
        if node.adr.is_some() {
            return Err(GraphError::SlotAlreadySet { id, slot: "adr" });
        }
        node.adr = Some(record);
        Ok(())
    }

    /// Stores the developer's output for a cell. Each slot can be written
    /// exactly once.
    pub fn set_refactored(&mut self, id: usize, source: String) -> Result<(), GraphError> {
        let node = self
            .nodes
            .get_mut(&id)
            .ok_or(GraphError::UnknownNode(id))?;
        if node.refactored.is_some() {
            return Err(GraphError::SlotAlreadySet {
                id,
                slot: "refactored",
            });
        }
        node.refactored = Some(source);
        Ok(())
    }

    /// One line per cell summarizing defs, uses, and direct parents —
    /// compact enough to put in a prompt. Example:
    ///
    /// ```text
    /// cell 0 [defines: x] [uses: ] -> parents:
    /// cell 1 [defines: ] [uses: x] -> parents: 0
    /// ```
    pub fn skeleton(&self) -> String {
        let mut lines = Vec::with_capacity(self.nodes.len());
        for node in self.nodes.values() {
            let defines = join_names(&node.bindings.defined);
            let uses = join_names(&node.bindings.used);
            let parents = self
                .parents_of(node.id)
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let parents = if parents.is_empty() {
                String::new()
            } else {
                format!(" {parents}")
            };
            lines.push(format!(
                "cell {} [defines: {defines}] [uses: {uses}] -> parents:{parents}",
                node.id
            ));
        }
        lines.join("\n")
    }
}

fn join_names(names: &BTreeSet<String>) -> String {
    names.iter().cloned().collect::<Vec<_>>().join(",")
}

/// Serialization formats for [`export_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

/// Renders the graph as Graphviz DOT or as JSON with sorted keys and
/// arrays; both are deterministic for a given graph.
pub fn export_graph(graph: &DependencyGraph, format: ExportFormat) -> String {
    match format {
        ExportFormat::Dot => {
            let mut out = String::from("digraph g {\n");
            for node in graph.nodes() {
                out.push_str(&format!("  n{} [label=\"cell {}\"];\n", node.id, node.id));
            }
            for (parent, child) in graph.edges() {
                out.push_str(&format!("  n{parent} -> n{child};\n"));
            }
            out.push_str("}\n");
            out
        }
        ExportFormat::Json => {
            let nodes: Vec<serde_json::Value> = graph
                .nodes()
                .map(|node| {
                    serde_json::json!({
                        "id": node.id,
                        "defines": node.bindings.defined,
                        "uses": node.bindings.used,
                    })
                })
                .collect();
            let edges: Vec<serde_json::Value> = graph
                .edges()
                .iter()
                .map(|(p, c)| serde_json::json!([p, c]))
                .collect();
            let doc = serde_json::json!({ "nodes": nodes, "edges": edges });
            serde_json::to_string_pretty(&doc).expect("graph export serializes")
        }
    }
}
