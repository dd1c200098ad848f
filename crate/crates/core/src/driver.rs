//! The outer solve loop: contract the graph, solve the relaxation, act on
//! the classified decision, and recover the matching at termination.
//!
//! Failures that smell like a degenerate perturbation (tied optima,
//! non-convergence, a structurally invalid relaxation optimum) restart the
//! whole solve from an empty blossom family under `seed + 1`: stored duals
//! are linear functions of the perturbed weights, so resuming them under
//! fresh noise would be incoherent.

use serde::Serialize;
use thiserror::Error;

use crate::contraction::{ContractedGraph, NodeId, SolverState, StateError};
use crate::graph::{perturb, WeightedGraph};
use crate::numeric::Dyadic;
use crate::relax::{
    classify, solve_relaxation, validate_half_integral, Backend, HalfIntegralSolution,
    RelaxConfig, RelaxError, StepDecision,
};

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub backend: Backend,
    pub seed: u64,
    /// Noise range `R`; `1` disables the perturbation.
    pub noise_range: u64,
    /// Outer iteration budget; defaults to `10 * |V|^2`.
    pub max_outer: Option<usize>,
    pub bp_max_rounds: usize,
    pub bp_stable_window: Option<usize>,
    pub enumerate_limit: usize,
    pub retry_limit: u32,
    pub threads: usize,
    pub collect_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            backend: Backend::Bp,
            seed: 0,
            noise_range: 1 << 20,
            max_outer: None,
            bp_max_rounds: 10_000,
            bp_stable_window: None,
            enumerate_limit: 16,
            retry_limit: 8,
            threads: 1,
            collect_trace: true,
        }
    }
}

impl SolveConfig {
    pub fn max_outer_for(&self, g: &WeightedGraph) -> usize {
        self.max_outer
            .unwrap_or(10 * g.vertex_count * g.vertex_count)
    }

    fn relax_config(&self) -> RelaxConfig {
        RelaxConfig {
            bp_max_rounds: self.bp_max_rounds,
            bp_stable_window: self.bp_stable_window,
            enumerate_limit: self.enumerate_limit,
            threads: self.threads,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryReason {
    NonUnique,
    NonConvergence,
    InvalidRelaxationStructure,
    IterationBudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RetryEvent {
    pub seed: u64,
    pub reason: RetryReason,
    pub iteration: usize,
    pub contracted_edges: usize,
}

/// One outer iteration as recorded in traces: the contracted graph size,
/// the relaxation optimum in half-units with its exact objective, and the
/// decision taken.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub nodes: usize,
    pub edges: usize,
    pub x: Vec<u8>,
    pub objective: ObjectiveRecord,
    pub decision: DecisionRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ObjectiveRecord {
    pub primary: String,
    pub secondary: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DecisionRecord {
    Terminate,
    Expand {
        blossom: u32,
        cycle: Vec<String>,
    },
    Contract {
        blossom: u32,
        cycle: Vec<String>,
        y: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchingResult {
    /// Original edge ids, sorted; a perfect matching of the input graph.
    pub matching: Vec<usize>,
    /// Sum of base weights over the matching (never the scaled ones).
    pub weight: i64,
    pub outer_iterations: usize,
    pub contractions: usize,
    pub expansions: usize,
    pub bp_rounds_total: usize,
    pub seed_used: u64,
    pub retries: u32,
    pub retry_events: Vec<RetryEvent>,
    pub trace: Vec<IterationRecord>,
}

impl MatchingResult {
    /// Matched endpoint pairs, 1-based, each pair and the list sorted.
    pub fn matching_pairs(&self, g: &WeightedGraph) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .matching
            .iter()
            .map(|&id| {
                let e = &g.edges[id];
                (e.u.min(e.v) + 1, e.u.max(e.v) + 1)
            })
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum SolveError {
    #[error("no perfect matching: {reason}")]
    Infeasible { reason: String },
    #[error("gave up after {attempts} attempts; last failure: {last}")]
    RetriesExhausted { attempts: u32, last: RelaxError },
    #[error("outer iteration budget of {limit} exceeded")]
    IterationBudgetExceeded { limit: usize },
    #[error("{0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<StateError> for SolveError {
    fn from(e: StateError) -> Self {
        SolveError::Internal(e.to_string())
    }
}

/// Everything a per-iteration observer gets to see: the contracted graph,
/// the relaxation optimum, the decision, and the state *after* the decision
/// was applied.
pub struct IterationView<'a> {
    pub iteration: usize,
    pub contracted: &'a ContractedGraph,
    pub solution: &'a HalfIntegralSolution,
    pub decision: &'a StepDecision,
    pub state: &'a SolverState,
}

enum AttemptOutcome {
    Done(MatchingResult),
    Retry {
        reason: RetryReason,
        iteration: usize,
        contracted_edges: usize,
        last: RelaxError,
    },
    Budget,
}

/// Solve minimum-weight perfect matching on `g`.
pub fn solve_mwpm(g: &WeightedGraph, cfg: &SolveConfig) -> Result<MatchingResult, SolveError> {
    solve_mwpm_observed(g, cfg, &mut |_| {})
}

/// As [`solve_mwpm`], invoking `observer` after every applied iteration.
pub fn solve_mwpm_observed(
    g: &WeightedGraph,
    cfg: &SolveConfig,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<MatchingResult, SolveError> {
    if g.vertex_count % 2 == 1 {
        return Err(SolveError::Infeasible {
            reason: format!("odd vertex count {}", g.vertex_count),
        });
    }
    if g.edges.is_empty() {
        return Err(SolveError::Infeasible {
            reason: "graph has no edges".into(),
        });
    }

    let mut events: Vec<RetryEvent> = Vec::new();
    let mut budget_retry_used = false;
    let mut attempt: u32 = 0;
    loop {
        let attempt_seed = cfg.seed.wrapping_add(attempt as u64);
        match run_attempt(g, cfg, attempt_seed, observer)? {
            AttemptOutcome::Done(mut result) => {
                result.seed_used = attempt_seed;
                result.retries = attempt;
                result.retry_events = events;
                return Ok(result);
            }
            AttemptOutcome::Retry {
                reason,
                iteration,
                contracted_edges,
                last,
            } => {
                events.push(RetryEvent {
                    seed: attempt_seed,
                    reason,
                    iteration,
                    contracted_edges,
                });
                attempt += 1;
                if attempt > cfg.retry_limit {
                    return Err(SolveError::RetriesExhausted {
                        attempts: attempt,
                        last,
                    });
                }
            }
            AttemptOutcome::Budget => {
                if budget_retry_used {
                    return Err(SolveError::IterationBudgetExceeded {
                        limit: cfg.max_outer_for(g),
                    });
                }
                budget_retry_used = true;
                events.push(RetryEvent {
                    seed: attempt_seed,
                    reason: RetryReason::IterationBudgetExceeded,
                    iteration: cfg.max_outer_for(g),
                    contracted_edges: 0,
                });
                attempt += 1;
            }
        }
    }
}

fn run_attempt(
    g: &WeightedGraph,
    cfg: &SolveConfig,
    seed: u64,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<AttemptOutcome, SolveError> {
    let mut state = SolverState::new(perturb(g, seed, cfg.noise_range));
    let relax_cfg = cfg.relax_config();
    let max_outer = cfg.max_outer_for(g);

    let mut trace = Vec::new();
    let mut contractions = 0usize;
    let mut expansions = 0usize;
    let mut bp_rounds_total = 0usize;
    let mut iteration = 0usize;

    loop {
        if iteration >= max_outer {
            return Ok(AttemptOutcome::Budget);
        }
        iteration += 1;

        let cg = state.build_contracted()?;
        let outcome = match solve_relaxation(&cg, cfg.backend, &relax_cfg) {
            Ok(o) => o,
            Err(RelaxError::Infeasible) => {
                return Err(SolveError::Infeasible {
                    reason: "relaxation infeasible on the contracted graph".into(),
                })
            }
            Err(e @ RelaxError::TooLarge { .. }) => {
                return Err(SolveError::Config(e.to_string()))
            }
            Err(e @ (RelaxError::NonUnique | RelaxError::NonConvergence { .. })) => {
                let reason = match e {
                    RelaxError::NonUnique => RetryReason::NonUnique,
                    _ => RetryReason::NonConvergence,
                };
                return Ok(AttemptOutcome::Retry {
                    reason,
                    iteration,
                    contracted_edges: cg.edge_count(),
                    last: e,
                });
            }
            Err(e @ RelaxError::Internal(_)) => return Err(SolveError::Internal(e.to_string())),
        };
        bp_rounds_total += outcome.bp_rounds;
        let solution = outcome.solution;

        // Structural validation along the whole trajectory. A failure here
        // means the optimum was not the unique vertex the theory promises,
        // i.e. the perturbation failed; re-perturbing is the remedy.
        let report = validate_half_integral(&cg, &solution);
        if !report.is_valid() {
            return Ok(AttemptOutcome::Retry {
                reason: RetryReason::InvalidRelaxationStructure,
                iteration,
                contracted_edges: cg.edge_count(),
                last: RelaxError::NonUnique,
            });
        }

        let decision = classify(&cg, &solution).map_err(|e| SolveError::Internal(e.to_string()))?;

        let decision_record = match &decision {
            StepDecision::Terminate => DecisionRecord::Terminate,
            StepDecision::Expand(id) => {
                let cycle = state
                    .blossom(*id)?
                    .cycle
                    .iter()
                    .map(|n| n.to_string())
                    .collect();
                state.expand_blossom(*id)?;
                expansions += 1;
                DecisionRecord::Expand {
                    blossom: *id,
                    cycle,
                }
            }
            StepDecision::Contract { nodes, edges } => {
                let cycle_nodes: Vec<NodeId> = nodes.iter().map(|&i| cg.nodes[i]).collect();
                let original: Vec<usize> =
                    edges.iter().map(|&i| cg.edges[i].original_edge_id).collect();
                let weights: Vec<Dyadic> =
                    edges.iter().map(|&i| cg.edges[i].w_dagger.clone()).collect();
                let id = state.contract_cycle(&cycle_nodes, &original, &weights)?;
                contractions += 1;
                DecisionRecord::Contract {
                    blossom: id,
                    cycle: cycle_nodes.iter().map(|n| n.to_string()).collect(),
                    y: cycle_nodes
                        .iter()
                        .map(|n| state.y(*n).expect("fresh cycle node has a dual").to_string())
                        .collect(),
                }
            }
        };

        if cfg.collect_trace {
            trace.push(IterationRecord {
                iter: iteration,
                nodes: cg.node_count(),
                edges: cg.edge_count(),
                x: solution.half_units.clone(),
                objective: ObjectiveRecord {
                    primary: solution.objective.primary.to_string(),
                    secondary: solution.objective.secondary.to_string(),
                },
                decision: decision_record,
            });
        }

        observer(&IterationView {
            iteration,
            contracted: &cg,
            solution: &solution,
            decision: &decision,
            state: &state,
        });

        if decision == StepDecision::Terminate {
            let matching = state.recover_matching(&cg, &solution.half_units)?;
            let weight = matching.iter().map(|&id| g.edges[id].weight).sum();
            return Ok(AttemptOutcome::Done(MatchingResult {
                matching,
                weight,
                outer_iterations: iteration,
                contractions,
                expansions,
                bp_rounds_total,
                seed_used: seed,
                retries: 0,
                retry_events: Vec::new(),
                trace,
            }));
        }
    }
}

// ---------------------------------------------------------------------------
// Result verification
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<VerificationCheck>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn first_failure(&self) -> Option<&VerificationCheck> {
        self.checks.iter().find(|c| c.status == CheckStatus::Fail)
    }

    fn push(&mut self, name: &'static str, status: CheckStatus, detail: String) {
        self.checks.push(VerificationCheck {
            name,
            status,
            detail,
        });
    }
}

/// Check a claimed result: edge validity, exact vertex coverage, weight
/// arithmetic, and (small instances) agreement with the subset-DP optimum.
pub fn verify_result(g: &WeightedGraph, r: &MatchingResult) -> VerificationReport {
    verify_matching(g, &r.matching, Some(r.weight))
}

/// The same checks for a bare edge set, reusable by external callers.
pub fn verify_matching(
    g: &WeightedGraph,
    matching: &[usize],
    claimed_weight: Option<i64>,
) -> VerificationReport {
    let mut report = VerificationReport { checks: Vec::new() };

    let mut valid_ids = true;
    for &id in matching {
        if id >= g.edges.len() {
            report.push(
                "edges_valid",
                CheckStatus::Fail,
                format!("edge id {id} out of range"),
            );
            valid_ids = false;
            break;
        }
    }
    if valid_ids {
        report.push("edges_valid", CheckStatus::Pass, String::new());
    }

    if valid_ids {
        let mut cover = vec![0u32; g.vertex_count];
        for &id in matching {
            let e = &g.edges[id];
            cover[e.u] += 1;
            cover[e.v] += 1;
        }
        if let Some(v) = cover.iter().position(|&c| c > 1) {
            report.push(
                "coverage",
                CheckStatus::Fail,
                format!("vertex {} covered twice", v + 1),
            );
        } else if let Some(v) = cover.iter().position(|&c| c == 0) {
            report.push(
                "coverage",
                CheckStatus::Fail,
                format!("vertex {} uncovered", v + 1),
            );
        } else {
            report.push("coverage", CheckStatus::Pass, String::new());
        }

        let actual: i64 = matching.iter().map(|&id| g.edges[id].weight).sum();
        match claimed_weight {
            Some(w) if w != actual => report.push(
                "weight_arithmetic",
                CheckStatus::Fail,
                format!("claimed weight {w}, edges sum to {actual}"),
            ),
            _ => report.push("weight_arithmetic", CheckStatus::Pass, String::new()),
        }

        if g.vertex_count <= crate::oracle::DP_VERTEX_LIMIT {
            match crate::oracle::exact_mwpm_base(g) {
                Ok(Some(opt)) if opt.weight == actual => report.push(
                    "oracle_optimality",
                    CheckStatus::Pass,
                    format!("optimum {}", opt.weight),
                ),
                Ok(Some(opt)) => report.push(
                    "oracle_optimality",
                    CheckStatus::Fail,
                    format!("weight {} but optimum is {}", actual, opt.weight),
                ),
                Ok(None) => report.push(
                    "oracle_optimality",
                    CheckStatus::Fail,
                    "oracle says no perfect matching exists".into(),
                ),
                Err(e) => report.push("oracle_optimality", CheckStatus::Skipped, e.to_string()),
            }
        } else {
            report.push(
                "oracle_optimality",
                CheckStatus::Skipped,
                format!(
                    "instance has {} vertices, DP limit is {}",
                    g.vertex_count,
                    crate::oracle::DP_VERTEX_LIMIT
                ),
            );
        }
    }

    report
}
