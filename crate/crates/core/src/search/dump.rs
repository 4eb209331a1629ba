//! Search-tree export in DOT and JSON.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mcts::SearchReport;
use crate::error::{Error, Result};
use crate::model::VehicleId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Partial passing order, e.g. `3-1-2`; empty at the root.
    pub order: String,
    pub vehicle: Option<VehicleId>,
    pub visits: u64,
    pub own_delay: f64,
    pub best_delay: f64,
    pub score: f64,
}

/// Search tree in expansion order; node `0` is the root and parents precede children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub nodes: Vec<SnapshotNode>,
}

impl TreeSnapshot {
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph search_tree {\n  node [shape=box, fontsize=10];\n");
        for n in &self.nodes {
            let name = if n.order.is_empty() { "root" } else { &n.order };
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\\nn={} J={:.3} Jbest={:.3} Q={:.3}\"];",
                n.id, name, n.visits, n.own_delay, n.best_delay, n.score
            );
        }
        for n in &self.nodes {
            if let Some(p) = n.parent {
                let _ = writeln!(out, "  n{p} -> n{};", n.id);
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeDump {
    pub dot: String,
    pub json: String,
}

pub fn dump_tree(report: &SearchReport) -> Result<TreeDump> {
    let snap = report.tree_snapshot.as_ref().ok_or(Error::NoSnapshot)?;
    Ok(TreeDump {
        dot: snap.to_dot(),
        json: snap.to_json()?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::mcts::{mcts_search, MctsConfig};
    use super::super::test_support::one_zone;
    use super::*;

    /// Minimal DOT checker for the subset we emit: a digraph header, attribute,
    /// node and edge statements, and a closing brace.
    fn check_dot(text: &str) -> std::result::Result<(usize, usize), String> {
        let mut lines = text.lines();
        if lines.next() != Some("digraph search_tree {") {
            return Err("bad header".into());
        }
        let (mut nodes, mut edges) = (0, 0);
        let mut closed = false;
        for line in lines {
            let l = line.trim();
            if l == "}" {
                closed = true;
                continue;
            }
            if closed {
                return Err("content after closing brace".into());
            }
            let stmt = l.strip_suffix(';').ok_or_else(|| format!("no semicolon: {l}"))?;
            let is_id = |s: &str| s.starts_with('n') && s[1..].chars().all(|c| c.is_ascii_digit()) && s.len() > 1;
            if let Some((a, b)) = stmt.split_once(" -> ") {
                if !is_id(a) || !is_id(b) {
                    return Err(format!("bad edge: {l}"));
                }
                edges += 1;
            } else if let Some((id, attrs)) = stmt.split_once(' ') {
                if id == "node" {
                    continue;
                }
                if !is_id(id) || !attrs.starts_with("[label=\"") || !attrs.ends_with("\"]") {
                    return Err(format!("bad node: {l}"));
                }
                let label = &attrs[8..attrs.len() - 2];
                if label.contains('"') {
                    return Err(format!("unescaped quote: {l}"));
                }
                nodes += 1;
            } else {
                return Err(format!("unknown statement: {l}"));
            }
        }
        if !closed {
            return Err("missing closing brace".into());
        }
        Ok((nodes, edges))
    }

    fn two_vehicle_report(keep: bool) -> SearchReport {
        let inst = one_zone(&[(1, 0, 10.0, 10.0), (2, 1, 10.0, 10.5)]);
        let mut cfg = MctsConfig::with_nodes(2);
        cfg.keep_tree = keep;
        mcts_search(&inst, &cfg).unwrap()
    }

    #[test]
    fn two_vehicle_tree_has_three_nodes() {
        let report = two_vehicle_report(true);
        let snap = report.tree_snapshot.as_ref().unwrap();
        assert_eq!(snap.nodes.len(), 3);
        assert_eq!(snap.nodes[0].visits, report.nodes_expanded);
        let child_visits: u64 = snap.nodes[1..].iter().map(|n| n.visits).sum();
        assert_eq!(child_visits, snap.nodes[0].visits);
    }

    #[test]
    fn dot_output_is_well_formed() {
        let report = two_vehicle_report(true);
        let dump = dump_tree(&report).unwrap();
        let (nodes, edges) = check_dot(&dump.dot).unwrap();
        assert_eq!(nodes as u64, report.nodes_expanded + 1);
        assert_eq!(edges, nodes - 1);
        let back: TreeSnapshot = serde_json::from_str(&dump.json).unwrap();
        assert_eq!(&back, report.tree_snapshot.as_ref().unwrap());
    }

    #[test]
    fn dump_without_snapshot_fails() {
        let report = two_vehicle_report(false);
        assert!(matches!(dump_tree(&report), Err(Error::NoSnapshot)));
    }
}
