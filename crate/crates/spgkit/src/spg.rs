//! System-wide propagation graph construction and path metrics.
//!
//! The SPG is a directed weakly-connected graph whose nodes are execution
//! waves keyed by (pid, wave_index) and whose edges are control-flow
//! transitions: intra-process edges from a wave's predecessor, cross-process
//! edges from transition events. Process-depth, wave-depth and SPG-width are
//! all defined over simple (node-repetition-free) directed paths starting at
//! the entry node; enumeration is exhaustive DFS with a configurable
//! expansion budget.

use std::collections::{BTreeMap, BTreeSet};

use crate::trace::{EventPayload, ExecutionTrace, NodeRef};

pub const DEFAULT_PATH_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpgNode {
    pub pid: u32,
    pub wave_index: u32,
    pub image_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    IntraProcess,
    CrossProcess,
}

#[derive(Debug, thiserror::Error)]
pub enum SpgError {
    #[error("graph is not weakly connected; orphan nodes: {}", format_nodes(.orphans))]
    DisconnectedGraph { orphans: Vec<NodeRef> },
    #[error("trace has no entry wave (initial pid {0}, wave 0)")]
    MissingEntryWave(u32),
    #[error("simple-path enumeration exceeded the expansion budget of {0}")]
    PathBudgetExceeded(u64),
    #[error("invalid edge {from} -> {to}: {reason}")]
    InvalidEdge {
        from: NodeRef,
        to: NodeRef,
        reason: String,
    },
    #[error("entry node {0} is not present in the node set")]
    MissingEntryNode(NodeRef),
}

fn format_nodes(nodes: &[NodeRef]) -> String {
    let parts: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
    parts.join(", ")
}

/// Immutable propagation graph with a distinguished entry node.
#[derive(Debug, Clone)]
pub struct Spg {
    nodes: Vec<SpgNode>,
    index: BTreeMap<(u32, u32), usize>,
    /// Successor lists sorted by (pid, wave) for deterministic traversal.
    successors: Vec<Vec<usize>>,
    edges: BTreeSet<(usize, usize)>,
    entry: usize,
}

impl Spg {
    /// Build a graph from explicit parts. Nodes are keyed by (pid, wave);
    /// duplicate edges collapse. Validates weak connectivity and the entry.
    pub fn from_parts(
        nodes: Vec<SpgNode>,
        edge_list: &[(NodeRef, NodeRef)],
        entry: NodeRef,
    ) -> Result<Spg, SpgError> {
        let mut index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            index.insert((node.pid, node.wave_index), i);
        }
        let entry_idx = *index
            .get(&(entry.pid, entry.wave))
            .ok_or(SpgError::MissingEntryNode(entry))?;

        let mut edges = BTreeSet::new();
        for (from, to) in edge_list {
            if from == to {
                return Err(SpgError::InvalidEdge {
                    from: *from,
                    to: *to,
                    reason: "self-loop".into(),
                });
            }
            let fi = *index.get(&(from.pid, from.wave)).ok_or(SpgError::InvalidEdge {
                from: *from,
                to: *to,
                reason: "unknown source node".into(),
            })?;
            let ti = *index.get(&(to.pid, to.wave)).ok_or(SpgError::InvalidEdge {
                from: *from,
                to: *to,
                reason: "unknown target node".into(),
            })?;
            edges.insert((fi, ti));
        }

        let mut successors = vec![Vec::new(); nodes.len()];
        for &(f, t) in &edges {
            successors[f].push(t);
        }
        for succ in &mut successors {
            succ.sort_by_key(|&i| (nodes[i].pid, nodes[i].wave_index));
        }

        let graph = Spg {
            nodes,
            index,
            successors,
            edges,
            entry: entry_idx,
        };
        graph.check_connectivity()?;
        Ok(graph)
    }

    fn check_connectivity(&self) -> Result<(), SpgError> {
        let n = self.nodes.len();
        let mut undirected = vec![Vec::new(); n];
        for &(f, t) in &self.edges {
            undirected[f].push(t);
            undirected[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.entry];
        seen[self.entry] = true;
        while let Some(v) = stack.pop() {
            for &w in &undirected[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        let orphans: Vec<NodeRef> = (0..n)
            .filter(|&i| !seen[i])
            .map(|i| NodeRef::new(self.nodes[i].pid, self.nodes[i].wave_index))
            .collect();
        if orphans.is_empty() {
            Ok(())
        } else {
            Err(SpgError::DisconnectedGraph { orphans })
        }
    }

    pub fn nodes(&self) -> &[SpgNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn entry(&self) -> NodeRef {
        let node = &self.nodes[self.entry];
        NodeRef::new(node.pid, node.wave_index)
    }

    pub fn edge_kind(&self, from: NodeRef, to: NodeRef) -> Option<EdgeKind> {
        let f = *self.index.get(&(from.pid, from.wave))?;
        let t = *self.index.get(&(to.pid, to.wave))?;
        if self.edges.contains(&(f, t)) {
            Some(if from.pid == to.pid {
                EdgeKind::IntraProcess
            } else {
                EdgeKind::CrossProcess
            })
        } else {
            None
        }
    }

    /// Edges as (from, to, kind), sorted by node keys.
    pub fn edges(&self) -> Vec<(NodeRef, NodeRef, EdgeKind)> {
        self.edges
            .iter()
            .map(|&(f, t)| {
                let from = NodeRef::new(self.nodes[f].pid, self.nodes[f].wave_index);
                let to = NodeRef::new(self.nodes[t].pid, self.nodes[t].wave_index);
                let kind = if from.pid == to.pid {
                    EdgeKind::IntraProcess
                } else {
                    EdgeKind::CrossProcess
                };
                (from, to, kind)
            })
            .collect()
    }

    pub fn process_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.pid)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn pids(&self) -> BTreeSet<u32> {
        self.nodes.iter().map(|n| n.pid).collect()
    }
}

/// Builds the SPG of a validated trace: one node per (pid, wave) entry,
/// intra-process edges from wave predecessors, deduplicated cross-process
/// edges from transition events. The entry is wave 0 of the first process.
pub fn build_spg(trace: &ExecutionTrace) -> Result<Spg, SpgError> {
    let mut nodes = Vec::new();
    let mut edge_list = Vec::new();
    for event in trace.events() {
        match &event.payload {
            EventPayload::WaveEntry {
                wave_index,
                predecessor,
            } => {
                let image_name = trace
                    .process(event.pid)
                    .map(|p| p.image_name.clone())
                    .unwrap_or_default();
                nodes.push(SpgNode {
                    pid: event.pid,
                    wave_index: *wave_index,
                    image_name,
                });
                if let Some(pred) = predecessor {
                    edge_list.push((*pred, NodeRef::new(event.pid, *wave_index)));
                }
            }
            EventPayload::CrossProcessTransition { source, target } => {
                edge_list.push((*source, *target));
            }
            _ => {}
        }
    }
    let entry = NodeRef::new(trace.initial_pid(), 0);
    nodes
        .iter()
        .any(|n| n.pid == entry.pid && n.wave_index == 0)
        .then_some(())
        .ok_or(SpgError::MissingEntryWave(entry.pid))?;
    Spg::from_parts(nodes, &edge_list, entry)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SpgMetrics {
    pub process_depth: u32,
    pub wave_depth: u32,
    pub width: u64,
    pub process_count: u32,
    pub wave_count: u32,
}

/// Exhaustive DFS over all simple directed paths from the entry.
///
/// A path terminates (and counts toward width) when every successor of its
/// last node is already on the path; on DAGs this is exactly the
/// out-degree-0 leaves. Process-depth and wave-depth are maximized over all
/// prefixes, which is equivalent to maximizing over maximal paths.
fn enumerate_paths(graph: &Spg, budget: u64) -> Result<SpgMetrics, SpgError> {
    let n = graph.node_count();
    let mut on_path = vec![false; n];
    // Number of nodes of each pid currently on the path; distinct-pid count
    // only changes when a pid's node count moves between 0 and 1.
    let mut pid_on_path: BTreeMap<u32, u32> = BTreeMap::new();
    let mut distinct_pids: u32 = 0;

    let mut max_distinct_pids: u32 = 0;
    let mut max_len: u32 = 0;
    let mut width: u64 = 0;
    let mut expansions: u64 = 0;

    // Stack of (node, index of next successor to try, had_extension).
    let mut stack: Vec<(usize, usize, bool)> = Vec::new();

    let push = |node: usize,
                on_path: &mut Vec<bool>,
                pid_on_path: &mut BTreeMap<u32, u32>,
                distinct: &mut u32| {
        on_path[node] = true;
        let slot = pid_on_path.entry(graph.nodes()[node].pid).or_insert(0);
        if *slot == 0 {
            *distinct += 1;
        }
        *slot += 1;
    };
    let pop = |node: usize,
               on_path: &mut Vec<bool>,
               pid_on_path: &mut BTreeMap<u32, u32>,
               distinct: &mut u32| {
        on_path[node] = false;
        let slot = pid_on_path.get_mut(&graph.nodes()[node].pid).unwrap();
        *slot -= 1;
        if *slot == 0 {
            *distinct -= 1;
        }
    };

    push(graph.entry, &mut on_path, &mut pid_on_path, &mut distinct_pids);
    stack.push((graph.entry, 0, false));
    max_distinct_pids = max_distinct_pids.max(distinct_pids);
    max_len = max_len.max(1);

    while !stack.is_empty() {
        let top = stack.len() - 1;
        let node = stack[top].0;
        let mut advanced = false;
        while stack[top].1 < graph.successors[node].len() {
            let candidate = graph.successors[node][stack[top].1];
            stack[top].1 += 1;
            if !on_path[candidate] {
                stack[top].2 = true;
                expansions += 1;
                if expansions > budget {
                    return Err(SpgError::PathBudgetExceeded(budget));
                }
                push(candidate, &mut on_path, &mut pid_on_path, &mut distinct_pids);
                stack.push((candidate, 0, false));
                max_distinct_pids = max_distinct_pids.max(distinct_pids);
                max_len = max_len.max(stack.len() as u32);
                advanced = true;
                break;
            }
        }
        if !advanced {
            let (node, _, extended) = stack.pop().unwrap();
            if !extended {
                // Maximal path: no unvisited successor remained.
                width += 1;
            }
            pop(node, &mut on_path, &mut pid_on_path, &mut distinct_pids);
        }
    }

    Ok(SpgMetrics {
        process_depth: max_distinct_pids,
        wave_depth: max_len,
        width,
        process_count: graph.process_count() as u32,
        wave_count: graph.node_count() as u32,
    })
}

pub fn metrics(graph: &Spg, budget: u64) -> Result<SpgMetrics, SpgError> {
    enumerate_paths(graph, budget)
}

/// Maximum number of distinct processes visited on any simple path from the entry.
pub fn process_depth(graph: &Spg, budget: u64) -> Result<u32, SpgError> {
    Ok(enumerate_paths(graph, budget)?.process_depth)
}

/// Node count of the longest simple path from the entry.
pub fn wave_depth(graph: &Spg, budget: u64) -> Result<u32, SpgError> {
    Ok(enumerate_paths(graph, budget)?.wave_depth)
}

/// Number of simple paths from the entry to leaf nodes (paths that cannot
/// be extended).
pub fn spg_width(graph: &Spg, budget: u64) -> Result<u64, SpgError> {
    Ok(enumerate_paths(graph, budget)?.width)
}

/// DOT rendering with deterministic node order (pid, then wave_index).
/// Cross-process edges are solid, intra-process dashed; the entry node is
/// double-circled.
pub fn to_dot(graph: &Spg) -> String {
    let mut nodes: Vec<&SpgNode> = graph.nodes().iter().collect();
    nodes.sort_by_key(|n| (n.pid, n.wave_index));
    let entry = graph.entry();

    let mut out = String::from("digraph spg {\n");
    for node in &nodes {
        let id = format!("P{}W{}", node.pid, node.wave_index);
        let shape = if node.pid == entry.pid && node.wave_index == entry.wave {
            "doublecircle"
        } else {
            "box"
        };
        out.push_str(&format!(
            "    {id} [label=\"{}\\n{id}\", shape={shape}];\n",
            node.image_name
        ));
    }
    let mut edges = graph.edges();
    edges.sort_by_key(|&(from, to, _)| (from, to));
    for (from, to, kind) in edges {
        let style = match kind {
            EdgeKind::CrossProcess => "solid",
            EdgeKind::IntraProcess => "dashed",
        };
        out.push_str(&format!("    {from} -> {to} [style={style}];\n"));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn node(pid: u32, wave: u32) -> SpgNode {
        SpgNode {
            pid,
            wave_index: wave,
            image_name: format!("p{pid}.exe"),
        }
    }

    fn simple_graph(edges: &[(u32, u32)]) -> Spg {
        // Nodes are (pid, 0) for every pid mentioned; entry is pid of first edge source.
        let mut pids = BTreeSet::new();
        for &(f, t) in edges {
            pids.insert(f);
            pids.insert(t);
        }
        let nodes = pids.iter().map(|&p| node(p, 0)).collect();
        let list: Vec<_> = edges
            .iter()
            .map(|&(f, t)| (NodeRef::new(f, 0), NodeRef::new(t, 0)))
            .collect();
        let entry = NodeRef::new(edges[0].0, 0);
        Spg::from_parts(nodes, &list, entry).unwrap()
    }

    #[test]
    fn single_node_metrics() {
        let g = Spg::from_parts(vec![node(1, 0)], &[], NodeRef::new(1, 0)).unwrap();
        let m = metrics(&g, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(
            m,
            SpgMetrics {
                process_depth: 1,
                wave_depth: 1,
                width: 1,
                process_count: 1,
                wave_count: 1
            }
        );
    }

    #[test]
    fn three_node_chain_wave_depth() {
        let g = simple_graph(&[(1, 2), (2, 3)]);
        assert_eq!(wave_depth(&g, DEFAULT_PATH_BUDGET).unwrap(), 3);
        assert_eq!(spg_width(&g, DEFAULT_PATH_BUDGET).unwrap(), 1);
    }

    #[test]
    fn duplicate_edges_collapse() {
        let nodes = vec![node(1, 0), node(2, 0)];
        let e = (NodeRef::new(1, 0), NodeRef::new(2, 0));
        let g = Spg::from_parts(nodes, &[e, e, e], NodeRef::new(1, 0)).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn disconnected_graph_lists_orphans() {
        let nodes = vec![node(1, 0), node(2, 0), node(3, 0)];
        let e = (NodeRef::new(1, 0), NodeRef::new(2, 0));
        match Spg::from_parts(nodes, &[e], NodeRef::new(1, 0)) {
            Err(SpgError::DisconnectedGraph { orphans }) => {
                assert_eq!(orphans, vec![NodeRef::new(3, 0)]);
            }
            other => panic!("expected DisconnectedGraph, got {other:?}"),
        }
    }

    #[test]
    fn cycle_terminates_and_counts_stuck_path() {
        // 1 -> 2 -> 1 is a 2-cycle: the only maximal path is [1, 2].
        let g = simple_graph(&[(1, 2), (2, 1)]);
        let m = metrics(&g, DEFAULT_PATH_BUDGET).unwrap();
        assert_eq!(m.width, 1);
        assert_eq!(m.wave_depth, 2);
        assert_eq!(m.process_depth, 2);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = simple_graph(&[(1, 2), (2, 3), (3, 4), (1, 3), (2, 4)]);
        assert!(matches!(
            metrics(&g, 1),
            Err(SpgError::PathBudgetExceeded(1))
        ));
    }

    #[test]
    fn dot_output_orders_nodes_and_marks_entry() {
        let g = simple_graph(&[(2, 1)]);
        let dot = to_dot(&g);
        assert!(dot.contains("P2W0 [label=\"p2.exe\\nP2W0\", shape=doublecircle]"));
        assert!(dot.contains("P2W0 -> P1W0 [style=solid]"));
    }
}
