//! The laminar blossom family: contraction, expansion, adjusted weights on
//! the contracted multigraph, and recovery of the final matching.
//!
//! State layout: every contraction allocates a [`BlossomRecord`] holding the
//! odd cycle it collapsed (node ids plus the original edges realizing the
//! hops). The records form a forest; a node is *outer* when it has no live
//! parent, and only outer nodes appear in the contracted graph. Stored dual
//! values (`y`) exist exactly for hidden nodes, i.e. direct children of live
//! blossoms.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::graph::PerturbedGraph;
use crate::numeric::Dyadic;

/// Identifier for a node of the (possibly contracted) graph: an original
/// vertex or a blossom. Blossom ids are allocated sequentially within one
/// solve and never reused.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum NodeId {
    Vertex(u32),
    Blossom(u32),
}

impl NodeId {
    pub fn is_blossom(&self) -> bool {
        matches!(self, NodeId::Blossom(_))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Vertex(v) => write!(f, "v{}", v + 1),
            NodeId::Blossom(b) => write!(f, "b{b}"),
        }
    }
}

/// One contracted odd cycle. `cycle[i]` and `cycle[(i+1) % len]` were joined
/// by the original edge `cycle_edges[i]` in the contracted graph that
/// existed at contraction time.
#[derive(Clone, Debug)]
pub struct BlossomRecord {
    pub id: u32,
    pub cycle: Vec<NodeId>,
    pub cycle_edges: Vec<usize>,
    pub alive: bool,
    pub parent: Option<u32>,
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum StateError {
    #[error("cycle has even length {0}")]
    EvenCycle(usize),
    #[error("cycle has length {0}, need at least 3")]
    CycleTooShort(usize),
    #[error("node {0} is not outer")]
    NotOuter(String),
    #[error("blossom {0} is not live")]
    NotLive(u32),
    #[error("unknown blossom {0}")]
    UnknownBlossom(u32),
    #[error("internal state inconsistency: {0}")]
    Inconsistent(String),
}

/// Mutable solver state: the perturbed instance, the blossom forest and the
/// stored duals of hidden nodes.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub graph: PerturbedGraph,
    blossoms: Vec<BlossomRecord>,
    vertex_parent: Vec<Option<u32>>,
    y_store: BTreeMap<NodeId, Dyadic>,
}

impl SolverState {
    pub fn new(graph: PerturbedGraph) -> Self {
        let n = graph.vertex_count();
        SolverState {
            graph,
            blossoms: Vec::new(),
            vertex_parent: vec![None; n],
            y_store: BTreeMap::new(),
        }
    }

    pub fn blossom(&self, id: u32) -> Result<&BlossomRecord, StateError> {
        self.blossoms
            .get(id as usize)
            .ok_or(StateError::UnknownBlossom(id))
    }

    pub fn live_blossom_count(&self) -> usize {
        self.blossoms.iter().filter(|b| b.alive).count()
    }

    pub fn y(&self, node: NodeId) -> Option<&Dyadic> {
        self.y_store.get(&node)
    }

    pub fn y_entries(&self) -> impl Iterator<Item = (&NodeId, &Dyadic)> {
        self.y_store.iter()
    }

    fn parent_of(&self, node: NodeId) -> Option<u32> {
        match node {
            NodeId::Vertex(v) => self.vertex_parent[v as usize],
            NodeId::Blossom(b) => self.blossoms[b as usize].parent,
        }
    }

    fn is_outer(&self, node: NodeId) -> bool {
        self.parent_of(node).is_none()
            && match node {
                NodeId::Vertex(_) => true,
                NodeId::Blossom(b) => self.blossoms[b as usize].alive,
            }
    }

    /// Outer representative of an original vertex: the topmost live blossom
    /// containing it, or the vertex itself.
    pub fn outer_of(&self, vertex: usize) -> NodeId {
        let mut node = NodeId::Vertex(vertex as u32);
        while let Some(p) = self.parent_of(node) {
            node = NodeId::Blossom(p);
        }
        node
    }

    /// Original vertices inside a node (the node itself for a vertex, the
    /// union of its cycle members for a blossom).
    pub fn vertices_in(&self, node: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match n {
                NodeId::Vertex(v) => out.push(v as usize),
                NodeId::Blossom(b) => stack.extend(self.blossoms[b as usize].cycle.iter().copied()),
            }
        }
        out
    }

    pub fn live_outer_blossoms(&self) -> Vec<u32> {
        self.blossoms
            .iter()
            .filter(|b| b.alive && b.parent.is_none())
            .map(|b| b.id)
            .collect()
    }

    /// Sum of stored duals along the chain from `vertex` up to, but
    /// excluding, its outer representative.
    fn hidden_chain_sum(&self, vertex: usize) -> Result<Dyadic, StateError> {
        let mut sum = Dyadic::zero();
        let mut node = NodeId::Vertex(vertex as u32);
        while let Some(p) = self.parent_of(node) {
            let y = self.y_store.get(&node).ok_or_else(|| {
                StateError::Inconsistent(format!("hidden node {node} has no stored y"))
            })?;
            sum = &sum + y;
            node = NodeId::Blossom(p);
        }
        Ok(sum)
    }

    /// Contract the multigraph over the outer nodes. For a surviving edge,
    /// the adjusted weight subtracts the stored dual of every hidden node
    /// the edge crosses out of.
    pub fn build_contracted(&self) -> Result<ContractedGraph, StateError> {
        let mut nodes: Vec<NodeId> = (0..self.graph.vertex_count())
            .map(|v| NodeId::Vertex(v as u32))
            .filter(|&n| self.is_outer(n))
            .collect();
        nodes.extend(self.live_outer_blossoms().into_iter().map(NodeId::Blossom));
        nodes.sort_unstable();

        let index_of = |n: NodeId| nodes.binary_search(&n).expect("outer node in node list");

        let mut edges = Vec::new();
        for e in &self.graph.base.edges {
            let ru = self.outer_of(e.u);
            let rv = self.outer_of(e.v);
            if ru == rv {
                continue; // hidden inside a blossom
            }
            let w = Dyadic::from_int(self.graph.internal_weights[e.id]);
            let w = &(&w - &self.hidden_chain_sum(e.u)?) - &self.hidden_chain_sum(e.v)?;
            edges.push(ContractedEdge {
                endpoints: (index_of(ru), index_of(rv)),
                original_edge_id: e.id,
                w_dagger: w,
            });
        }

        let is_blossom = nodes.iter().map(NodeId::is_blossom).collect();
        Ok(ContractedGraph {
            nodes,
            is_blossom,
            edges,
        })
    }

    /// Contract an odd cycle of outer nodes into a new blossom and store the
    /// duals that make every cycle edge tight: `y_v` is half the alternating
    /// sum of cycle weights by distance from `v`, so `y_u + y_v = w` on each
    /// cycle edge `(u, v, w)` exactly.
    pub fn contract_cycle(
        &mut self,
        cycle_nodes: &[NodeId],
        cycle_original_edges: &[usize],
        w_dagger: &[Dyadic],
    ) -> Result<u32, StateError> {
        let len = cycle_nodes.len();
        if len < 3 {
            return Err(StateError::CycleTooShort(len));
        }
        if len % 2 == 0 {
            return Err(StateError::EvenCycle(len));
        }
        debug_assert_eq!(cycle_original_edges.len(), len);
        debug_assert_eq!(w_dagger.len(), len);
        for &n in cycle_nodes {
            if !self.is_outer(n) {
                return Err(StateError::NotOuter(n.to_string()));
            }
        }

        let id = self.blossoms.len() as u32;
        for (j, &node) in cycle_nodes.iter().enumerate() {
            let y = cycle_dual(j, w_dagger);
            self.y_store.insert(node, y);
            match node {
                NodeId::Vertex(v) => self.vertex_parent[v as usize] = Some(id),
                NodeId::Blossom(b) => self.blossoms[b as usize].parent = Some(id),
            }
        }

        // tightness of the defining linear system, checked exactly
        for i in 0..len {
            let u = cycle_nodes[i];
            let v = cycle_nodes[(i + 1) % len];
            let resid = &(&w_dagger[i] - &self.y_store[&u]) - &self.y_store[&v];
            if !resid.is_zero() {
                return Err(StateError::Inconsistent(format!(
                    "cycle edge ({u}, {v}) not tight after contraction: residual {resid}"
                )));
            }
        }

        self.blossoms.push(BlossomRecord {
            id,
            cycle: cycle_nodes.to_vec(),
            cycle_edges: cycle_original_edges.to_vec(),
            alive: true,
            parent: None,
        });
        Ok(id)
    }

    /// Remove an outer blossom: its cycle nodes become outer again and their
    /// stored duals are cleared. Duals of nodes nested deeper are untouched.
    pub fn expand_blossom(&mut self, id: u32) -> Result<(), StateError> {
        let record = self.blossom(id)?;
        if !record.alive {
            return Err(StateError::NotLive(id));
        }
        if record.parent.is_some() {
            return Err(StateError::NotOuter(NodeId::Blossom(id).to_string()));
        }
        let cycle = record.cycle.clone();
        for node in cycle {
            self.y_store.remove(&node);
            match node {
                NodeId::Vertex(v) => self.vertex_parent[v as usize] = None,
                NodeId::Blossom(b) => self.blossoms[b as usize].parent = None,
            }
        }
        self.blossoms[id as usize].alive = false;
        Ok(())
    }

    /// Step C: expand the final integral solution back to a perfect matching
    /// of the original graph. `half_units` indexes `cg.edges` and must be
    /// integral with every contracted node covered exactly once.
    pub fn recover_matching(
        &self,
        cg: &ContractedGraph,
        half_units: &[u8],
    ) -> Result<Vec<usize>, StateError> {
        let n = self.graph.vertex_count();
        let mut covered = vec![false; n];
        let mut matching = Vec::new();
        let mut add_edge = |edge_id: usize, covered: &mut Vec<bool>| -> Result<(), StateError> {
            let e = &self.graph.base.edges[edge_id];
            for v in [e.u, e.v] {
                if covered[v] {
                    return Err(StateError::Inconsistent(format!(
                        "vertex {} covered twice during recovery",
                        v + 1
                    )));
                }
                covered[v] = true;
            }
            matching.push(edge_id);
            Ok(())
        };

        for (i, &h) in half_units.iter().enumerate() {
            match h {
                0 => {}
                2 => add_edge(cg.edges[i].original_edge_id, &mut covered)?,
                _ => {
                    return Err(StateError::Inconsistent(
                        "recovery requires an integral solution".into(),
                    ))
                }
            }
        }

        // Expand outer blossoms until none are left. Expanding one reveals
        // its children, so iterate to a fixed point; ascending id keeps the
        // order deterministic.
        let mut live: Vec<u32> = self
            .blossoms
            .iter()
            .filter(|b| b.alive)
            .map(|b| b.id)
            .collect();
        let mut expanded = vec![false; self.blossoms.len()];
        let mut hidden_parent: Vec<Option<u32>> = self.blossoms.iter().map(|b| b.parent).collect();

        while !live.is_empty() {
            let mut next_live = Vec::new();
            for &id in &live {
                if hidden_parent[id as usize].map_or(false, |p| !expanded[p as usize]) {
                    next_live.push(id);
                    continue;
                }
                let record = &self.blossoms[id as usize];
                let len = record.cycle.len();
                // locate the unique child containing the covered vertex
                let mut covered_child = None;
                for (j, &child) in record.cycle.iter().enumerate() {
                    let has_covered = self.vertices_in(child).iter().any(|&v| covered[v]);
                    if has_covered {
                        if covered_child.is_some() {
                            return Err(StateError::Inconsistent(format!(
                                "blossom b{id} has two covered children"
                            )));
                        }
                        covered_child = Some(j);
                    }
                }
                let k = covered_child.ok_or_else(|| {
                    StateError::Inconsistent(format!("blossom b{id} has no covered child"))
                })?;
                // match the remaining even path of children pairwise
                let mut step = 1;
                while step < len {
                    let edge_pos = (k + step) % len;
                    add_edge(record.cycle_edges[edge_pos], &mut covered)?;
                    step += 2;
                }
                expanded[id as usize] = true;
                for &child in &record.cycle {
                    if let NodeId::Blossom(b) = child {
                        hidden_parent[b as usize] = None;
                        next_live.push(b);
                    }
                }
            }
            next_live.sort_unstable();
            if next_live.len() == live.len() {
                return Err(StateError::Inconsistent(
                    "recovery made no progress expanding blossoms".into(),
                ));
            }
            live = next_live;
        }

        if let Some(v) = covered.iter().position(|&c| !c) {
            return Err(StateError::Inconsistent(format!(
                "vertex {} uncovered after recovery",
                v + 1
            )));
        }
        matching.sort_unstable();
        Ok(matching)
    }

    /// Pairwise laminarity of all live blossoms' vertex sets; used by tests.
    pub fn check_laminar(&self) -> bool {
        let sets: Vec<Vec<usize>> = self
            .blossoms
            .iter()
            .filter(|b| b.alive)
            .map(|b| {
                let mut s = self.vertices_in(NodeId::Blossom(b.id));
                s.sort_unstable();
                s
            })
            .collect();
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                let a_in_b = sets[i].iter().all(|v| sets[j].binary_search(v).is_ok());
                let b_in_a = sets[j].iter().all(|v| sets[i].binary_search(v).is_ok());
                let disjoint = sets[i].iter().all(|v| sets[j].binary_search(v).is_err());
                if !(a_in_b || b_in_a || disjoint) {
                    return false;
                }
            }
        }
        true
    }
}

/// `y_j = 1/2 * sum_i (-1)^{d(e_i, v_j)} w_i`, where `d` is the cyclic
/// distance from node `j` to edge `i` (the two incident edges have `d = 0`).
fn cycle_dual(j: usize, w_dagger: &[Dyadic]) -> Dyadic {
    let len = w_dagger.len();
    let mut acc = Dyadic::zero();
    for (i, w) in w_dagger.iter().enumerate() {
        // edge i joins nodes i and i+1
        let d1 = cyclic_distance(j, i, len);
        let d2 = cyclic_distance(j, (i + 1) % len, len);
        let d = d1.min(d2);
        if d % 2 == 0 {
            acc = &acc + w;
        } else {
            acc = &acc - w;
        }
    }
    acc.halve()
}

fn cyclic_distance(a: usize, b: usize, len: usize) -> usize {
    let fwd = (b + len - a) % len;
    fwd.min(len - fwd)
}

/// Multigraph over the outer nodes. Parallel edges between the same outer
/// pair are all retained, each with its original-edge provenance; edges
/// with both endpoints in the same outer node are omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractedGraph {
    pub nodes: Vec<NodeId>,
    pub is_blossom: Vec<bool>,
    pub edges: Vec<ContractedEdge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractedEdge {
    /// Indices into `nodes`.
    pub endpoints: (usize, usize),
    pub original_edge_id: usize,
    pub w_dagger: Dyadic,
}

impl ContractedGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Incident edge indices per node.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.endpoints.0].push(i);
            inc[e.endpoints.1].push(i);
        }
        inc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{perturb, WeightedGraph};
    use num_bigint::BigInt;

    const T6: &str = "p edge 6 7\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\n";

    fn dy(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(BigInt::from(num), exp)
    }

    fn t6_state() -> SolverState {
        let g = WeightedGraph::parse(T6).unwrap();
        SolverState::new(perturb(&g, 0, 1)) // B = 8, no noise
    }

    fn vid(v: u32) -> NodeId {
        NodeId::Vertex(v)
    }

    /// Contract the triangle on 0-based vertices using current contracted
    /// weights; panics if the requested nodes/edges are not present.
    fn contract_triangle(state: &mut SolverState, verts: [u32; 3]) -> u32 {
        let cg = state.build_contracted().unwrap();
        let nodes: Vec<NodeId> = verts.iter().map(|&v| vid(v)).collect();
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for i in 0..3 {
            let a = nodes[i];
            let b = nodes[(i + 1) % 3];
            let ia = cg.nodes.binary_search(&a).unwrap();
            let ib = cg.nodes.binary_search(&b).unwrap();
            let ce = cg
                .edges
                .iter()
                .find(|e| {
                    (e.endpoints == (ia, ib)) || (e.endpoints == (ib, ia))
                })
                .expect("triangle edge present");
            edges.push(ce.original_edge_id);
            weights.push(ce.w_dagger.clone());
        }
        state.contract_cycle(&nodes, &edges, &weights).unwrap()
    }

    #[test]
    fn empty_family_contracts_to_original() {
        let state = t6_state();
        let cg = state.build_contracted().unwrap();
        assert_eq!(cg.node_count(), 6);
        assert_eq!(cg.edge_count(), 7);
        for e in &cg.edges {
            let w = state.graph.internal_weights[e.original_edge_id];
            assert_eq!(e.w_dagger, Dyadic::from_int(w));
        }
    }

    #[test]
    fn t6_single_triangle_weights() {
        let mut state = t6_state();
        let b = contract_triangle(&mut state, [0, 1, 2]);
        // unit triangle scaled by B = 8: y = B/2 each
        for v in 0..3 {
            assert_eq!(state.y(vid(v)).unwrap(), &dy(4, 0));
        }
        let cg = state.build_contracted().unwrap();
        // intra-triangle edges vanish; bridge weight 10B - B/2 = 19B/2 = 76
        assert_eq!(cg.node_count(), 4);
        assert_eq!(cg.edge_count(), 4);
        let bridge = cg
            .edges
            .iter()
            .find(|e| e.original_edge_id == 6)
            .unwrap();
        assert_eq!(bridge.w_dagger, dy(76, 0));
        assert!(cg.nodes.contains(&NodeId::Blossom(b)));
    }

    #[test]
    fn t6_both_triangles_weights() {
        let mut state = t6_state();
        contract_triangle(&mut state, [0, 1, 2]);
        contract_triangle(&mut state, [3, 4, 5]);
        let cg = state.build_contracted().unwrap();
        // 2 blossom nodes, 1 edge, w = 10B - B/2 - B/2 = 9B = 72
        assert_eq!(cg.node_count(), 2);
        assert_eq!(cg.edge_count(), 1);
        assert!(cg.is_blossom.iter().all(|&b| b));
        assert_eq!(cg.edges[0].w_dagger, dy(72, 0));
        assert!(state.check_laminar());
    }

    #[test]
    fn cycle_dual_examples() {
        // unit triangle: y = (1/2, 1/2, 1/2)
        let w = vec![dy(1, 0), dy(1, 0), dy(1, 0)];
        for j in 0..3 {
            assert_eq!(cycle_dual(j, &w), dy(1, 1));
        }
        // triangle (1, 2, 3) in cyclic edge order: y = (1, 0, 2)
        let w = vec![dy(1, 0), dy(2, 0), dy(3, 0)];
        assert_eq!(cycle_dual(0, &w), dy(1, 0));
        assert_eq!(cycle_dual(1, &w), dy(0, 0));
        assert_eq!(cycle_dual(2, &w), dy(2, 0));
        // 5-cycle with all weights 2: y = 1 everywhere
        let w = vec![dy(2, 0); 5];
        for j in 0..5 {
            assert_eq!(cycle_dual(j, &w), dy(1, 0));
        }
    }

    #[test]
    fn cycle_edges_are_tight_after_contraction() {
        // asymmetric weights on a 5-cycle; tightness must hold exactly
        let w: Vec<Dyadic> = [3, 7, 1, 9, 5].iter().map(|&x| dy(x, 0)).collect();
        for i in 0..5 {
            let yu = cycle_dual(i, &w);
            let yv = cycle_dual((i + 1) % 5, &w);
            assert_eq!(&yu + &yv, w[i]);
        }
    }

    #[test]
    fn contract_rejects_bad_cycles() {
        let mut state = t6_state();
        let nodes = [vid(0), vid(1), vid(2), vid(3)];
        let err = state
            .contract_cycle(&nodes, &[0, 1, 2, 3], &vec![dy(1, 0); 4])
            .unwrap_err();
        assert_eq!(err, StateError::EvenCycle(4));

        let err = state
            .contract_cycle(&[vid(0)], &[0], &vec![dy(1, 0); 1])
            .unwrap_err();
        assert_eq!(err, StateError::CycleTooShort(1));

        contract_triangle(&mut state, [0, 1, 2]);
        // vertex 0 is now hidden
        let err = state
            .contract_cycle(&[vid(0), vid(3), vid(4)], &[0, 1, 2], &vec![dy(1, 0); 3])
            .unwrap_err();
        assert!(matches!(err, StateError::NotOuter(_)));
    }

    #[test]
    fn contract_then_expand_restores_weights() {
        let mut state = t6_state();
        let before = state.build_contracted().unwrap();
        let b = contract_triangle(&mut state, [0, 1, 2]);
        state.expand_blossom(b).unwrap();
        let after = state.build_contracted().unwrap();
        assert_eq!(before, after);
        assert_eq!(state.y_entries().count(), 0);
        assert_eq!(state.live_blossom_count(), 0);
    }

    #[test]
    fn nested_expand_preserves_inner_duals() {
        // T6 plus an edge (5, 1) wired so that after contracting {1,2,3}
        // the nodes {b0, 4, 5} form a 3-cycle in the contracted graph.
        let g = WeightedGraph::parse(
            "p edge 6 9\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\ne 1 5 4\ne 2 6 3\n",
        )
        .unwrap();
        let mut state = SolverState::new(perturb(&g, 0, 1));
        let inner = contract_triangle(&mut state, [0, 1, 2]);

        // outer cycle: b0 -- v3 (edge 6: (3,4)), v3 -- v4 (edge 3: (4,5)),
        // v4 -- b0 (edge 7: (1,5))
        let cg = state.build_contracted().unwrap();
        let find = |orig: usize| {
            cg.edges
                .iter()
                .find(|e| e.original_edge_id == orig)
                .unwrap()
                .w_dagger
                .clone()
        };
        let nodes = vec![NodeId::Blossom(inner), vid(3), vid(4)];
        let outer = state
            .contract_cycle(&nodes, &[6, 3, 7], &[find(6), find(3), find(7)])
            .unwrap();

        let inner_y_before: Vec<Dyadic> =
            (0..3).map(|v| state.y(vid(v)).unwrap().clone()).collect();
        assert!(state.y(NodeId::Blossom(inner)).is_some());

        state.expand_blossom(outer).unwrap();
        // direct children's duals cleared, nested members preserved
        assert!(state.y(NodeId::Blossom(inner)).is_none());
        assert!(state.y(vid(3)).is_none());
        for v in 0..3 {
            assert_eq!(state.y(vid(v)).unwrap(), &inner_y_before[v as usize]);
        }
        assert!(state.check_laminar());
    }

    #[test]
    fn expand_rejects_non_outer_and_dead() {
        let mut state = t6_state();
        let b = contract_triangle(&mut state, [0, 1, 2]);
        state.expand_blossom(b).unwrap();
        assert_eq!(state.expand_blossom(b).unwrap_err(), StateError::NotLive(b));

        let g = WeightedGraph::parse(
            "p edge 6 9\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\ne 1 5 4\ne 2 6 3\n",
        )
        .unwrap();
        let mut state = SolverState::new(perturb(&g, 0, 1));
        let inner = contract_triangle(&mut state, [0, 1, 2]);
        let cg = state.build_contracted().unwrap();
        let find = |orig: usize| {
            cg.edges
                .iter()
                .find(|e| e.original_edge_id == orig)
                .unwrap()
                .w_dagger
                .clone()
        };
        state
            .contract_cycle(
                &[NodeId::Blossom(inner), vid(3), vid(4)],
                &[6, 3, 7],
                &[find(6), find(3), find(7)],
            )
            .unwrap();
        assert!(matches!(
            state.expand_blossom(inner).unwrap_err(),
            StateError::NotOuter(_)
        ));
    }

    #[test]
    fn recover_with_empty_family() {
        let g = WeightedGraph::parse("p edge 2 1\ne 1 2 5\n").unwrap();
        let state = SolverState::new(perturb(&g, 0, 1));
        let cg = state.build_contracted().unwrap();
        let m = state.recover_matching(&cg, &[2]).unwrap();
        assert_eq!(m, vec![0]);
    }

    #[test]
    fn recover_t6_terminal_state() {
        let mut state = t6_state();
        contract_triangle(&mut state, [0, 1, 2]);
        contract_triangle(&mut state, [3, 4, 5]);
        let cg = state.build_contracted().unwrap();
        // x = 1 on the single remaining (bridge) edge
        let m = state.recover_matching(&cg, &[2]).unwrap();
        // edges (3,4), (1,2), (5,6) -> ids 6, 0, 4
        assert_eq!(m, vec![0, 4, 6]);
        let weight: i64 = m.iter().map(|&e| state.graph.base.edges[e].weight).sum();
        assert_eq!(weight, 12);
    }

    #[test]
    fn recover_five_cycle_child_matching() {
        // 5-cycle on vertices 0..5 plus pendant vertex 5 attached to 0
        let g = WeightedGraph::parse(
            "p edge 6 6\ne 1 2 2\ne 2 3 2\ne 3 4 2\ne 4 5 2\ne 5 1 2\ne 1 6 3\n",
        )
        .unwrap();
        let mut state = SolverState::new(perturb(&g, 0, 1));
        let cg = state.build_contracted().unwrap();
        let nodes: Vec<NodeId> = (0..5).map(vid).collect();
        let w: Vec<Dyadic> = (0..5).map(|i| cg.edges[i].w_dagger.clone()).collect();
        state.contract_cycle(&nodes, &[0, 1, 2, 3, 4], &w).unwrap();

        let cg = state.build_contracted().unwrap();
        assert_eq!(cg.edge_count(), 1);
        let m = state.recover_matching(&cg, &[2]).unwrap();
        // external match covers child 0; the even path 1-2-3-4 pairs as
        // (1,2) and (3,4): edge ids 1 and 3
        assert_eq!(m, vec![1, 3, 5]);
    }

    #[test]
    fn recover_rejects_corrupt_cover() {
        let mut state = t6_state();
        contract_triangle(&mut state, [0, 1, 2]);
        contract_triangle(&mut state, [3, 4, 5]);
        let cg = state.build_contracted().unwrap();
        // no covered vertex in either blossom
        let err = state.recover_matching(&cg, &[0]).unwrap_err();
        assert!(matches!(err, StateError::Inconsistent(_)));
    }

    #[test]
    fn dual_exponent_bounded_by_nesting_depth() {
        // contract nested triangles three deep on a graph rich enough to
        // supply the cycles; exponents of stored duals stay <= depth
        let g = WeightedGraph::parse(
            "p edge 6 9\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\ne 1 5 4\ne 2 6 3\n",
        )
        .unwrap();
        let mut state = SolverState::new(perturb(&g, 0, 1));
        contract_triangle(&mut state, [0, 1, 2]);
        let cg = state.build_contracted().unwrap();
        let find = |orig: usize| {
            cg.edges
                .iter()
                .find(|e| e.original_edge_id == orig)
                .unwrap()
                .w_dagger
                .clone()
        };
        state
            .contract_cycle(
                &[NodeId::Blossom(0), vid(3), vid(4)],
                &[6, 3, 7],
                &[find(6), find(3), find(7)],
            )
            .unwrap();
        for (_, y) in state.y_entries() {
            assert!(y.exponent() <= 2, "exponent {} exceeds depth", y.exponent());
        }
    }
}
