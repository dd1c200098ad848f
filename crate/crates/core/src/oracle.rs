//! Independent ground-truth engines: exact minimum-weight perfect matching
//! by subset dynamic programming, and structural validation of solutions as
//! vertex partitions into odd cycles, claws and a matching.
//!
//! Nothing here shares code with the solver path; that independence is the
//! point.

use thiserror::Error;

use crate::contraction::ContractedGraph;
use crate::graph::WeightedGraph;
use crate::relax::HalfIntegralSolution;

pub const DP_VERTEX_LIMIT: usize = 22;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum OracleError {
    #[error("{vertices} vertices exceed the DP limit of {limit}")]
    TooLarge { vertices: usize, limit: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpSolution {
    /// Edge ids of one minimum-weight perfect matching, sorted.
    pub matching: Vec<usize>,
    pub weight: i64,
    /// Whether the optimal perfect matching is unique.
    pub unique: bool,
}

/// Exact minimum-weight perfect matching over vertex subsets:
/// `cost(S) = min over partners v of the lowest vertex of S` — `O(2^n * n)`
/// time, usable to 22 vertices. Returns `None` when no perfect matching
/// exists (including odd vertex counts).
pub fn exact_mwpm_dp(
    vertex_count: usize,
    edges: &[(usize, usize, i64)],
) -> Result<Option<DpSolution>, OracleError> {
    if vertex_count > DP_VERTEX_LIMIT {
        return Err(OracleError::TooLarge {
            vertices: vertex_count,
            limit: DP_VERTEX_LIMIT,
        });
    }
    if vertex_count % 2 == 1 {
        return Ok(None);
    }
    if vertex_count == 0 {
        return Ok(Some(DpSolution {
            matching: vec![],
            weight: 0,
            unique: true,
        }));
    }

    let mut adj = vec![None::<(usize, i64)>; vertex_count * vertex_count];
    for (id, &(u, v, w)) in edges.iter().enumerate() {
        adj[u * vertex_count + v] = Some((id, w));
        adj[v * vertex_count + u] = Some((id, w));
    }

    const UNREACHED: i64 = i64::MAX;
    let full = (1usize << vertex_count) - 1;
    let mut cost = vec![UNREACHED; full + 1];
    let mut ways = vec![0u8; full + 1]; // optimal-matching count, saturated at 2
    cost[0] = 0;
    ways[0] = 1;

    for mask in 1..=full {
        if (mask.count_ones() % 2) == 1 {
            continue;
        }
        let u = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << u);
        let mut best = UNREACHED;
        let mut count = 0u8;
        let mut v_bits = rest;
        while v_bits != 0 {
            let v = v_bits.trailing_zeros() as usize;
            v_bits &= v_bits - 1;
            if let Some((_, w)) = adj[u * vertex_count + v] {
                let sub = rest & !(1 << v);
                if cost[sub] != UNREACHED {
                    let c = cost[sub] + w;
                    if c < best {
                        best = c;
                        count = ways[sub];
                    } else if c == best {
                        count = count.saturating_add(ways[sub]);
                    }
                }
            }
        }
        cost[mask] = best;
        ways[mask] = count.min(2);
    }

    if cost[full] == UNREACHED {
        return Ok(None);
    }

    // walk back, pairing the lowest vertex with its smallest optimal partner
    let mut matching = Vec::with_capacity(vertex_count / 2);
    let mut mask = full;
    while mask != 0 {
        let u = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << u);
        let mut chosen = None;
        let mut v_bits = rest;
        while v_bits != 0 {
            let v = v_bits.trailing_zeros() as usize;
            v_bits &= v_bits - 1;
            if let Some((id, w)) = adj[u * vertex_count + v] {
                let sub = rest & !(1 << v);
                if cost[sub] != UNREACHED && cost[sub] + w == cost[mask] {
                    chosen = Some((v, id));
                    break;
                }
            }
        }
        let (v, id) = chosen.expect("reachable mask has an optimal transition");
        matching.push(id);
        mask = rest & !(1 << v);
    }
    matching.sort_unstable();

    Ok(Some(DpSolution {
        matching,
        weight: cost[full],
        unique: ways[full] == 1,
    }))
}

/// DP on the instance's base weights.
pub fn exact_mwpm_base(g: &WeightedGraph) -> Result<Option<DpSolution>, OracleError> {
    let edges: Vec<(usize, usize, i64)> = g.edges.iter().map(|e| (e.u, e.v, e.weight)).collect();
    exact_mwpm_dp(g.vertex_count, &edges)
}

/// DP with caller-supplied weights (e.g. the scaled, perturbed ones), used
/// to check whether a perturbation made the optimum unique.
pub fn exact_mwpm_weighted(
    g: &WeightedGraph,
    weights: &[i64],
) -> Result<Option<DpSolution>, OracleError> {
    let edges: Vec<(usize, usize, i64)> = g
        .edges
        .iter()
        .map(|e| (e.u, e.v, weights[e.id]))
        .collect();
    exact_mwpm_dp(g.vertex_count, &edges)
}

/// A vertex partition into odd cycles, claws (stars) and a matching,
/// all as sets of edge indices into the inspected graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Decomposition {
    pub cycles: Vec<Vec<usize>>,
    pub claws: Vec<Vec<usize>>,
    pub matching: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct DecompositionReport {
    pub violations: Vec<String>,
}

impl DecompositionReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check that the parts are pairwise vertex-disjoint, cover every vertex
/// exactly once, cycles are single odd cycles, claws share a center, and
/// the matching is vertex-disjoint internally.
pub fn validate_decomposition(
    node_count: usize,
    edges: &[(usize, usize)],
    d: &Decomposition,
) -> DecompositionReport {
    let mut report = DecompositionReport::default();
    let mut covered_by = vec![0u32; node_count];

    let vertex_set = |edge_ids: &[usize]| -> Vec<usize> {
        let mut vs: Vec<usize> = edge_ids
            .iter()
            .flat_map(|&e| [edges[e].0, edges[e].1])
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    };

    for (i, cycle) in d.cycles.iter().enumerate() {
        if cycle.len() % 2 == 0 {
            report
                .violations
                .push(format!("cycle {i} has even length {}", cycle.len()));
        }
        let vs = vertex_set(cycle);
        let mut degree = vec![0u32; node_count];
        for &e in cycle {
            degree[edges[e].0] += 1;
            degree[edges[e].1] += 1;
        }
        if vs.len() != cycle.len() || vs.iter().any(|&v| degree[v] != 2) {
            report
                .violations
                .push(format!("cycle {i} is not a single simple cycle"));
        }
        for v in vs {
            covered_by[v] += 1;
        }
    }

    for (i, claw) in d.claws.iter().enumerate() {
        if claw.is_empty() {
            report.violations.push(format!("claw {i} is empty"));
            continue;
        }
        let center_exists = [edges[claw[0]].0, edges[claw[0]].1]
            .iter()
            .any(|&c| claw.iter().all(|&e| edges[e].0 == c || edges[e].1 == c));
        if !center_exists {
            report
                .violations
                .push(format!("claw {i} has no common center vertex"));
        }
        for v in vertex_set(claw) {
            covered_by[v] += 1;
        }
    }

    {
        let mut degree = vec![0u32; node_count];
        for &e in &d.matching {
            degree[edges[e].0] += 1;
            degree[edges[e].1] += 1;
        }
        if let Some(v) = degree.iter().position(|&c| c > 1) {
            report
                .violations
                .push(format!("matching covers vertex {v} more than once"));
        }
        for v in vertex_set(&d.matching) {
            covered_by[v] += 1;
        }
    }

    for (v, &c) in covered_by.iter().enumerate() {
        if c == 0 {
            report.violations.push(format!("vertex {v} uncovered"));
        } else if c > 1 {
            report
                .violations
                .push(format!("vertex {v} covered by {c} parts"));
        }
    }

    report
}

/// Read a valid half-integral solution as a cycle-claw-matching structure:
/// half edges group into cycles, fully used edges at blossom nodes of
/// x-degree above one group into claws centered there, and the remaining
/// fully used edges form the matching.
pub fn half_solution_to_decomposition(
    cg: &ContractedGraph,
    x: &HalfIntegralSolution,
) -> Result<Decomposition, String> {
    let report = crate::relax::validate_half_integral(cg, x);
    if !report.is_valid() {
        return Err(format!(
            "half support is not a disjoint union of odd cycles: {:?}",
            report.violations
        ));
    }

    let cycles: Vec<Vec<usize>> = report.half_cycles.iter().map(|c| c.edges.clone()).collect();

    let inc = cg.incidence();
    let sums: Vec<u32> = inc
        .iter()
        .map(|edges| edges.iter().map(|&e| x.half_units[e] as u32).sum())
        .collect();

    let mut claws = Vec::new();
    let mut in_claw = vec![false; cg.edge_count()];
    for (v, &s) in sums.iter().enumerate() {
        if cg.is_blossom[v] && s > 2 {
            let claw: Vec<usize> = inc[v]
                .iter()
                .copied()
                .filter(|&e| x.half_units[e] == 2)
                .collect();
            for &e in &claw {
                in_claw[e] = true;
            }
            claws.push(claw);
        }
    }

    let matching = (0..cg.edge_count())
        .filter(|&e| x.half_units[e] == 2 && !in_claw[e])
        .collect();

    Ok(Decomposition {
        cycles,
        claws,
        matching,
    })
}

/// Endpoint pairs of a contracted graph, for feeding the decomposition
/// validator.
pub fn contracted_edge_pairs(cg: &ContractedGraph) -> Vec<(usize, usize)> {
    cg.edges.iter().map(|e| e.endpoints).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contraction::{ContractedEdge, NodeId};
    use crate::graph::WeightedGraph;
    use crate::numeric::Dyadic;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    const T6: &str = "p edge 6 7\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\n";
    const K4: &str = "p edge 4 6\ne 1 2 1\ne 3 4 1\ne 1 3 2\ne 2 4 2\ne 1 4 3\ne 2 3 3\n";

    #[test]
    fn dp_single_edge() {
        let sol = exact_mwpm_dp(2, &[(0, 1, 5)]).unwrap().unwrap();
        assert_eq!(sol.weight, 5);
        assert_eq!(sol.matching, vec![0]);
        assert!(sol.unique);
    }

    #[test]
    fn dp_k4_fixture() {
        let g = WeightedGraph::parse(K4).unwrap();
        let sol = exact_mwpm_base(&g).unwrap().unwrap();
        assert_eq!(sol.weight, 2);
        assert_eq!(sol.matching, vec![0, 1]); // (1,2) and (3,4)
        assert!(sol.unique);
    }

    #[test]
    fn dp_t6_fixture() {
        let g = WeightedGraph::parse(T6).unwrap();
        let sol = exact_mwpm_base(&g).unwrap().unwrap();
        assert_eq!(sol.weight, 12);
        assert_eq!(sol.matching, vec![0, 4, 6]);
        assert!(sol.unique);
    }

    #[test]
    fn dp_detects_infeasible_and_odd() {
        assert_eq!(exact_mwpm_dp(3, &[(0, 1, 1), (1, 2, 1)]).unwrap(), None);
        // star K_{1,3}
        assert_eq!(
            exact_mwpm_dp(4, &[(0, 1, 1), (0, 2, 1), (0, 3, 1)]).unwrap(),
            None
        );
    }

    #[test]
    fn dp_reports_tied_optima() {
        // unit 4-cycle: two perfect matchings of equal weight
        let sol = exact_mwpm_dp(4, &[(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)])
            .unwrap()
            .unwrap();
        assert_eq!(sol.weight, 2);
        assert!(!sol.unique);
    }

    #[test]
    fn dp_rejects_oversized_instances() {
        let err = exact_mwpm_dp(23, &[]).unwrap_err();
        assert_eq!(
            err,
            OracleError::TooLarge {
                vertices: 23,
                limit: 22
            }
        );
    }

    /// All perfect matchings by direct recursion; the oracle's oracle.
    fn all_perfect_matchings(n: usize, edges: &[(usize, usize, i64)]) -> Vec<(Vec<usize>, i64)> {
        fn rec(
            covered: &mut Vec<bool>,
            edges: &[(usize, usize, i64)],
            picked: &mut Vec<usize>,
            out: &mut Vec<(Vec<usize>, i64)>,
        ) {
            let u = match covered.iter().position(|&c| !c) {
                None => {
                    let w = picked.iter().map(|&e| edges[e].2).sum();
                    let mut m = picked.clone();
                    m.sort_unstable();
                    out.push((m, w));
                    return;
                }
                Some(u) => u,
            };
            for (id, &(a, b, _)) in edges.iter().enumerate() {
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if covered[v] {
                    continue;
                }
                covered[u] = true;
                covered[v] = true;
                picked.push(id);
                rec(covered, edges, picked, out);
                picked.pop();
                covered[u] = false;
                covered[v] = false;
            }
        }
        let mut out = Vec::new();
        rec(&mut vec![false; n], edges, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn dp_agrees_with_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let n = 4 + 2 * (trial % 3); // 4, 6, 8
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.next_u64() % 100 < 55 {
                        edges.push((u, v, (rng.next_u64() % 50) as i64 + 1));
                    }
                }
            }
            let dp = exact_mwpm_dp(n, &edges).unwrap();
            let all = all_perfect_matchings(n, &edges);
            match dp {
                None => assert!(all.is_empty(), "DP missed matchings for n={n} {edges:?}"),
                Some(sol) => {
                    let best = all.iter().map(|(_, w)| *w).min().unwrap();
                    assert_eq!(sol.weight, best);
                    let optima: std::collections::BTreeSet<_> = all
                        .iter()
                        .filter(|(_, w)| *w == best)
                        .map(|(m, _)| m.clone())
                        .collect();
                    assert!(optima.contains(&sol.matching));
                    assert_eq!(sol.unique, optima.len() == 1);
                }
            }
        }
    }

    fn t6_cg() -> ContractedGraph {
        let g = WeightedGraph::parse(T6).unwrap();
        crate::contraction::SolverState::new(crate::graph::perturb(&g, 0, 1))
            .build_contracted()
            .unwrap()
    }

    #[test]
    fn decomposition_of_t6_half_solution() {
        let cg = t6_cg();
        let x = HalfIntegralSolution::from_half_units(&cg, vec![1, 1, 1, 1, 1, 1, 0]);
        let d = half_solution_to_decomposition(&cg, &x).unwrap();
        assert_eq!(d.cycles.len(), 2);
        assert!(d.claws.is_empty());
        assert!(d.matching.is_empty());
        let report = validate_decomposition(cg.node_count(), &contracted_edge_pairs(&cg), &d);
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn decomposition_of_integral_solution_is_a_matching() {
        let cg = t6_cg();
        let x = HalfIntegralSolution::from_half_units(&cg, vec![2, 0, 0, 0, 2, 0, 2]);
        let d = half_solution_to_decomposition(&cg, &x).unwrap();
        assert_eq!(d, Decomposition {
            cycles: vec![],
            claws: vec![],
            matching: vec![0, 4, 6],
        });
        let report = validate_decomposition(cg.node_count(), &contracted_edge_pairs(&cg), &d);
        assert!(report.is_valid());
    }

    #[test]
    fn claw_from_over_degree_blossom() {
        let mut nodes = vec![NodeId::Blossom(0)];
        let mut edges = Vec::new();
        for i in 0..3u32 {
            nodes.push(NodeId::Vertex(i));
            edges.push(ContractedEdge {
                endpoints: (0, i as usize + 1),
                original_edge_id: i as usize,
                w_dagger: Dyadic::from_int(1),
            });
        }
        let cg = ContractedGraph {
            is_blossom: nodes.iter().map(NodeId::is_blossom).collect(),
            nodes,
            edges,
        };
        let x = HalfIntegralSolution::from_half_units(&cg, vec![2, 2, 2]);
        let d = half_solution_to_decomposition(&cg, &x).unwrap();
        assert_eq!(d.claws, vec![vec![0, 1, 2]]);
        assert!(d.matching.is_empty());
        let report = validate_decomposition(cg.node_count(), &contracted_edge_pairs(&cg), &d);
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn validator_rejects_overlap_and_even_cycles() {
        // triangle 0-1-2 plus edge (2,3): cycle and matching share vertex 2
        let edges = [(0, 1), (1, 2), (0, 2), (2, 3)];
        let d = Decomposition {
            cycles: vec![vec![0, 1, 2]],
            claws: vec![],
            matching: vec![3],
        };
        let report = validate_decomposition(4, &edges, &d);
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.contains("covered by 2")));

        // 4-cycle listed as a cycle
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0)];
        let d = Decomposition {
            cycles: vec![vec![0, 1, 2, 3]],
            claws: vec![],
            matching: vec![],
        };
        let report = validate_decomposition(4, &edges, &d);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("even length")));
    }

    #[test]
    fn validator_requires_full_cover() {
        let edges = [(0, 1)];
        let d = Decomposition {
            cycles: vec![],
            claws: vec![],
            matching: vec![],
        };
        let report = validate_decomposition(2, &edges, &d);
        assert_eq!(report.violations.len(), 2); // both vertices uncovered
    }
}
