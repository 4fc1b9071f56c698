//! Shared test support: an exhaustive simple-path enumerator independent of
//! the library's DFS (used as the metrics oracle) and a random
//! weakly-connected digraph generator.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spgkit::spg::{Spg, SpgNode};
use spgkit::trace::NodeRef;

pub struct OracleMetrics {
    pub process_depth: u32,
    pub wave_depth: u32,
    pub width: u64,
}

/// Enumerate every maximal simple path from `entry` recursively, computing
/// the three path metrics directly from their definitions.
pub fn oracle_metrics(pids: &[u32], successors: &[Vec<usize>], entry: usize) -> OracleMetrics {
    struct State<'a> {
        pids: &'a [u32],
        successors: &'a [Vec<usize>],
        on_path: Vec<bool>,
        path: Vec<usize>,
        process_depth: u32,
        wave_depth: u32,
        width: u64,
    }

    fn visit(state: &mut State<'_>, node: usize) {
        state.on_path[node] = true;
        state.path.push(node);

        let distinct: BTreeSet<u32> = state.path.iter().map(|&i| state.pids[i]).collect();
        state.process_depth = state.process_depth.max(distinct.len() as u32);
        state.wave_depth = state.wave_depth.max(state.path.len() as u32);

        let mut extended = false;
        for &next in &state.successors[node] {
            if !state.on_path[next] {
                extended = true;
                visit(state, next);
            }
        }
        if !extended {
            state.width += 1;
        }

        state.path.pop();
        state.on_path[node] = false;
    }

    let mut state = State {
        pids,
        successors,
        on_path: vec![false; pids.len()],
        path: Vec::new(),
        process_depth: 0,
        wave_depth: 0,
        width: 0,
    };
    visit(&mut state, entry);
    OracleMetrics {
        process_depth: state.process_depth,
        wave_depth: state.wave_depth,
        width: state.width,
    }
}

/// Adjacency representation of a graph for the oracle: per-node pid list
/// plus successor lists, in the library graph's node order.
pub fn oracle_view(graph: &Spg) -> (Vec<u32>, Vec<Vec<usize>>, usize) {
    let nodes = graph.nodes();
    let index_of = |node: NodeRef| {
        nodes
            .iter()
            .position(|n| n.pid == node.pid && n.wave_index == node.wave)
            .unwrap()
    };
    let pids: Vec<u32> = nodes.iter().map(|n| n.pid).collect();
    let mut successors = vec![Vec::new(); nodes.len()];
    for (from, to, _) in graph.edges() {
        successors[index_of(from)].push(index_of(to));
    }
    let entry = index_of(graph.entry());
    (pids, successors, entry)
}

/// Random weakly-connected digraph with up to 12 nodes; nodes share pids
/// pairwise ((pid, wave) = (i/2, i%2)) and cycles are allowed. The entry is
/// (pid 0, wave 0).
pub fn random_graph(seed: u64) -> Spg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = rng.gen_range(2..=12);
    let nodes: Vec<SpgNode> = (0..n)
        .map(|i| SpgNode {
            pid: (i / 2) as u32,
            wave_index: (i % 2) as u32,
            image_name: format!("p{}.exe", i / 2),
        })
        .collect();
    let node_ref = |i: usize| NodeRef::new((i / 2) as u32, (i % 2) as u32);

    let mut edges = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        if rng.gen_bool(0.7) {
            edges.push((node_ref(parent), node_ref(i)));
        } else {
            edges.push((node_ref(i), node_ref(parent)));
        }
    }
    let extra = rng.gen_range(0..=8);
    for _ in 0..extra {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push((node_ref(a), node_ref(b)));
        }
    }
    Spg::from_parts(nodes, &edges, NodeRef::new(0, 0)).expect("spanning tree keeps it connected")
}
