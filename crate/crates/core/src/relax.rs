//! Solving the relaxation on a contracted graph and classifying its
//! half-integral optimum into the next driver step.
//!
//! Two interchangeable backends produce the optimum under the
//! (weight, tie-break) lexicographic objective: the message-passing engine
//! in [`crate::bp`] and an exhaustive half-unit enumeration used as the
//! desk-scale oracle. Solutions are encoded in half-units: per contracted
//! edge a value in `{0, 1, 2}` standing for `x` in `{0, 1/2, 1}`.

use serde::Serialize;
use thiserror::Error;

use crate::contraction::ContractedGraph;
use crate::numeric::{Dyadic, TieBreakCost};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Bp,
    Enumerate,
}

#[derive(Clone, Debug)]
pub struct RelaxConfig {
    pub bp_max_rounds: usize,
    /// Decode-stability window; defaults to `|V| + 5` of the contracted graph.
    pub bp_stable_window: Option<usize>,
    pub enumerate_limit: usize,
    pub threads: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            bp_max_rounds: 10_000,
            bp_stable_window: None,
            enumerate_limit: 16,
            threads: 1,
        }
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum RelaxError {
    /// No point satisfies the relaxation constraints.
    #[error("relaxation infeasible: the instance has no perfect matching")]
    Infeasible,
    /// Two feasible points tie exactly, or the decoder reported a belief tie.
    #[error("relaxation optimum is not unique")]
    NonUnique,
    #[error("message passing did not stabilize within {rounds} rounds")]
    NonConvergence { rounds: usize },
    #[error("contracted graph has {edges} edges, enumeration limit is {limit}")]
    TooLarge { edges: usize, limit: usize },
    #[error("relaxation backend bug: {0}")]
    Internal(String),
}

/// Optimum of the relaxation in half-units, with its exact objective value
/// (primary: the relaxation value; secondary: the tie-break channel, equal
/// to the number of fully used edges).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfIntegralSolution {
    pub half_units: Vec<u8>,
    pub objective: TieBreakCost,
}

impl HalfIntegralSolution {
    pub fn from_half_units(cg: &ContractedGraph, half_units: Vec<u8>) -> Self {
        let objective = objective_of(cg, &half_units);
        HalfIntegralSolution {
            half_units,
            objective,
        }
    }

    pub fn is_integral(&self) -> bool {
        self.half_units.iter().all(|&h| h != 1)
    }
}

pub(crate) fn objective_of(cg: &ContractedGraph, half_units: &[u8]) -> TieBreakCost {
    let mut doubled = Dyadic::zero();
    let mut fulls = 0i64;
    for (e, &h) in cg.edges.iter().zip(half_units) {
        match h {
            0 => {}
            1 => doubled = &doubled + &e.w_dagger,
            2 => {
                doubled = &doubled + &e.w_dagger.double();
                fulls += 1;
            }
            _ => unreachable!("half-units are 0, 1 or 2"),
        }
    }
    TieBreakCost {
        primary: doubled.halve(),
        secondary: fulls.into(),
    }
}

/// Result of policy step B: exactly one of terminate, expand a blossom, or
/// contract an odd half-cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepDecision {
    Terminate,
    /// Blossom id of the node to expand.
    Expand(u32),
    /// An odd cycle of half-valued edges: node indices and edge indices
    /// into the contracted graph, with `edges[i]` joining `nodes[i]` and
    /// `nodes[(i + 1) % len]`.
    Contract {
        nodes: Vec<usize>,
        edges: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    /// A non-blossom node whose incident half-units do not sum to 2.
    NonBlossomDegree { node: usize, half_units: u32 },
    /// A blossom node whose incident half-units sum below 2.
    BlossomDegree { node: usize, half_units: u32 },
    /// A node with an odd number of incident half edges (the half support
    /// cannot be a disjoint union of cycles).
    HalfSupportNotCycles { node: usize, incident_halves: usize },
    /// A closed half cycle of even length.
    EvenHalfCycle { edges: Vec<usize> },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// The vertex-disjoint half cycles, in discovery order (by smallest
    /// contained edge index). Empty when the half support is empty or
    /// malformed.
    pub half_cycles: Vec<HalfCycle>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HalfCycle {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the three structural invariants of a half-integral solution:
/// exact degree at non-blossom nodes, at-least-one degree at blossom nodes,
/// and half support forming vertex-disjoint odd cycles.
pub fn validate_half_integral(cg: &ContractedGraph, x: &HalfIntegralSolution) -> ValidationReport {
    let mut report = ValidationReport::default();
    let inc = cg.incidence();

    for (v, edges) in inc.iter().enumerate() {
        let sum: u32 = edges.iter().map(|&e| x.half_units[e] as u32).sum();
        if cg.is_blossom[v] {
            if sum < 2 {
                report.violations.push(Violation::BlossomDegree {
                    node: v,
                    half_units: sum,
                });
            }
        } else if sum != 2 {
            report.violations.push(Violation::NonBlossomDegree {
                node: v,
                half_units: sum,
            });
        }
    }

    match half_support_cycles(cg, &x.half_units) {
        Ok(cycles) => {
            for c in &cycles {
                if c.edges.len() % 2 == 0 {
                    report.violations.push(Violation::EvenHalfCycle {
                        edges: c.edges.clone(),
                    });
                }
            }
            report.half_cycles = cycles;
        }
        Err(v) => report.violations.push(v),
    }

    report
}

/// Group the half-valued edges into closed walks. Fails when some node has
/// an odd number of incident half edges. Cycles are reported starting from
/// their smallest edge index; parallel edges are distinguished by index.
fn half_support_cycles(cg: &ContractedGraph, half_units: &[u8]) -> Result<Vec<HalfCycle>, Violation> {
    let mut node_halves: Vec<Vec<usize>> = vec![Vec::new(); cg.node_count()];
    for (i, &h) in half_units.iter().enumerate() {
        if h == 1 {
            let (a, b) = cg.edges[i].endpoints;
            node_halves[a].push(i);
            node_halves[b].push(i);
        }
    }
    for (v, list) in node_halves.iter().enumerate() {
        if list.len() != 0 && list.len() != 2 {
            return Err(Violation::HalfSupportNotCycles {
                node: v,
                incident_halves: list.len(),
            });
        }
    }

    let mut visited = vec![false; half_units.len()];
    let mut cycles = Vec::new();
    for start in 0..half_units.len() {
        if half_units[start] != 1 || visited[start] {
            continue;
        }
        let (first, mut at) = cg.edges[start].endpoints;
        let mut nodes = vec![first];
        let mut edges = vec![start];
        visited[start] = true;
        let mut prev_edge = start;
        while at != first {
            nodes.push(at);
            let &next = node_halves[at]
                .iter()
                .find(|&&e| e != prev_edge)
                .expect("degree-2 half node has another half edge");
            visited[next] = true;
            edges.push(next);
            let (a, b) = cg.edges[next].endpoints;
            at = if a == at { b } else { a };
            prev_edge = next;
        }
        cycles.push(HalfCycle { nodes, edges });
    }
    Ok(cycles)
}

/// Step B decision with the stated precedence: terminate on an integral
/// degree-one solution; otherwise expand the smallest-id blossom whose
/// x-degree exceeds one; otherwise contract the half cycle containing the
/// smallest edge index.
pub fn classify(cg: &ContractedGraph, x: &HalfIntegralSolution) -> Result<StepDecision, RelaxError> {
    let inc = cg.incidence();
    let sums: Vec<u32> = inc
        .iter()
        .map(|edges| edges.iter().map(|&e| x.half_units[e] as u32).sum())
        .collect();

    if x.is_integral() && sums.iter().all(|&s| s == 2) {
        return Ok(StepDecision::Terminate);
    }

    // half-units > 2 covers both fractional degree 3/2 and integral degree >= 2
    let mut expand: Option<(u32, usize)> = None;
    for (v, &s) in sums.iter().enumerate() {
        if cg.is_blossom[v] && s > 2 {
            if let crate::contraction::NodeId::Blossom(id) = cg.nodes[v] {
                if expand.map_or(true, |(best, _)| id < best) {
                    expand = Some((id, v));
                }
            }
        }
    }
    if let Some((id, _)) = expand {
        return Ok(StepDecision::Expand(id));
    }

    let cycles = half_support_cycles(cg, &x.half_units)
        .map_err(|v| RelaxError::Internal(format!("half support not cyclic: {v:?}")))?;
    let first = cycles
        .into_iter()
        .find(|c| c.edges.len() % 2 == 1)
        .ok_or_else(|| {
            RelaxError::Internal(
                "no step applies: solution is neither integral, expandable, nor half-cyclic"
                    .into(),
            )
        })?;
    Ok(StepDecision::Contract {
        nodes: first.nodes,
        edges: first.edges,
    })
}

#[derive(Debug)]
pub struct RelaxOutcome {
    pub solution: HalfIntegralSolution,
    pub bp_rounds: usize,
}

/// Solve the relaxation with the chosen backend. Both backends return the
/// identical half-unit vector whenever both are applicable.
pub fn solve_relaxation(
    cg: &ContractedGraph,
    backend: Backend,
    cfg: &RelaxConfig,
) -> Result<RelaxOutcome, RelaxError> {
    match backend {
        Backend::Enumerate => {
            if cg.edge_count() > cfg.enumerate_limit {
                return Err(RelaxError::TooLarge {
                    edges: cg.edge_count(),
                    limit: cfg.enumerate_limit,
                });
            }
            let solution = enumerate_backend(cg, cfg.threads)?;
            Ok(RelaxOutcome {
                solution,
                bp_rounds: 0,
            })
        }
        Backend::Bp => {
            let (solution, bp_rounds) = crate::bp::solve_bp(cg, cfg)?;
            Ok(RelaxOutcome {
                solution,
                bp_rounds,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Exhaustive backend
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Best {
    /// Doubled objective: sum of `w * half_units`, tie-break in `secondary`.
    cost: TieBreakCost,
    assign: Vec<u8>,
    tie: bool,
}

struct SearchState {
    assign: Vec<u8>,
    node_sum: Vec<u32>,
    remaining: Vec<u32>,
    cost: TieBreakCost,
}

/// Exhaustive search over half-unit vectors with feasibility pruning by
/// partial per-node sums. No cost pruning: exact tie detection requires
/// visiting every feasible point.
pub fn enumerate_backend(
    cg: &ContractedGraph,
    threads: usize,
) -> Result<HalfIntegralSolution, RelaxError> {
    let inc = cg.incidence();
    if inc.iter().any(|l| l.is_empty()) {
        return Err(RelaxError::Infeasible);
    }

    let state = SearchState {
        assign: vec![0; cg.edge_count()],
        node_sum: vec![0; cg.node_count()],
        remaining: inc.iter().map(|l| l.len() as u32).collect(),
        cost: TieBreakCost::zero(),
    };

    let best = search_dispatch(cg, state, threads);

    match best {
        None => Err(RelaxError::Infeasible),
        Some(b) if b.tie => Err(RelaxError::NonUnique),
        Some(b) => {
            let objective = TieBreakCost {
                primary: b.cost.primary.halve(),
                secondary: b.cost.secondary,
            };
            Ok(HalfIntegralSolution {
                half_units: b.assign,
                objective,
            })
        }
    }
}

#[cfg(feature = "parallel")]
fn search_dispatch(cg: &ContractedGraph, mut state: SearchState, threads: usize) -> Option<Best> {
    use rayon::prelude::*;

    const PREFIX_DEPTH: usize = 6;
    if threads <= 1 || cg.edge_count() <= PREFIX_DEPTH {
        let mut best = None;
        dfs(cg, &mut state, 0, cg.edge_count(), &mut best);
        return best;
    }

    // Split deterministically on the first edges, finish each prefix
    // sequentially, and merge with a canonical (cost, vector) order so the
    // result is independent of worker scheduling.
    let mut prefixes = Vec::new();
    collect_prefixes(cg, &mut state, 0, PREFIX_DEPTH, &mut prefixes);
    prefixes
        .into_par_iter()
        .map(|mut st| {
            let mut best = None;
            dfs(cg, &mut st, PREFIX_DEPTH, cg.edge_count(), &mut best);
            best
        })
        .reduce(|| None, merge_best)
}

#[cfg(not(feature = "parallel"))]
fn search_dispatch(cg: &ContractedGraph, mut state: SearchState, _threads: usize) -> Option<Best> {
    let mut best = None;
    dfs(cg, &mut state, 0, cg.edge_count(), &mut best);
    best
}

#[cfg(feature = "parallel")]
fn collect_prefixes(
    cg: &ContractedGraph,
    state: &mut SearchState,
    i: usize,
    depth: usize,
    out: &mut Vec<SearchState>,
) {
    if i == depth {
        out.push(SearchState {
            assign: state.assign.clone(),
            node_sum: state.node_sum.clone(),
            remaining: state.remaining.clone(),
            cost: state.cost.clone(),
        });
        return;
    }
    for_each_feasible(cg, state, i, |cg, state| {
        collect_prefixes(cg, state, i + 1, depth, out)
    });
}

fn dfs(cg: &ContractedGraph, state: &mut SearchState, i: usize, m: usize, best: &mut Option<Best>) {
    if i == m {
        record(state, best);
        return;
    }
    for_each_feasible(cg, state, i, |cg, state| dfs(cg, state, i + 1, m, best));
}

/// Try each half-unit value on edge `i`, keeping the partial state feasible,
/// and undo all mutations before returning.
fn for_each_feasible(
    cg: &ContractedGraph,
    state: &mut SearchState,
    i: usize,
    mut visit: impl FnMut(&ContractedGraph, &mut SearchState),
) {
    let (a, b) = cg.edges[i].endpoints;
    state.remaining[a] -= 1;
    state.remaining[b] -= 1;
    let w = &cg.edges[i].w_dagger;

    for h in 0u8..=2 {
        state.node_sum[a] += h as u32;
        state.node_sum[b] += h as u32;
        if feasible_so_far(cg, state, a) && feasible_so_far(cg, state, b) {
            let delta = match h {
                0 => TieBreakCost::zero(),
                1 => TieBreakCost::new(w.clone(), 0),
                _ => TieBreakCost::new(w.double(), 1),
            };
            let saved = state.cost.clone();
            state.cost = &state.cost + &delta;
            state.assign[i] = h;
            visit(cg, state);
            state.assign[i] = 0;
            state.cost = saved;
        }
        state.node_sum[a] -= h as u32;
        state.node_sum[b] -= h as u32;
    }

    state.remaining[a] += 1;
    state.remaining[b] += 1;
}

fn feasible_so_far(cg: &ContractedGraph, state: &SearchState, v: usize) -> bool {
    let sum = state.node_sum[v];
    let remaining = state.remaining[v];
    if !cg.is_blossom[v] && sum > 2 {
        return false;
    }
    if sum + 2 * remaining < 2 {
        return false;
    }
    if remaining == 0 {
        if cg.is_blossom[v] {
            sum >= 2
        } else {
            sum == 2
        }
    } else {
        true
    }
}

fn record(state: &SearchState, best: &mut Option<Best>) {
    match best {
        None => {
            *best = Some(Best {
                cost: state.cost.clone(),
                assign: state.assign.clone(),
                tie: false,
            });
        }
        Some(b) => match state.cost.cmp(&b.cost) {
            std::cmp::Ordering::Less => {
                *best = Some(Best {
                    cost: state.cost.clone(),
                    assign: state.assign.clone(),
                    tie: false,
                });
            }
            std::cmp::Ordering::Equal => {
                // distinct feasible points with exactly equal cost
                b.tie = true;
                if state.assign < b.assign {
                    b.assign = state.assign.clone();
                }
            }
            std::cmp::Ordering::Greater => {}
        },
    }
}

#[cfg(feature = "parallel")]
fn merge_best(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(mut a), Some(b)) => match a.cost.cmp(&b.cost) {
            std::cmp::Ordering::Less => Some(a),
            std::cmp::Ordering::Greater => Some(b),
            std::cmp::Ordering::Equal => {
                a.tie = true;
                if b.assign < a.assign {
                    a.assign = b.assign;
                }
                Some(a)
            }
        },
    }
}
