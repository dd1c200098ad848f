//! Exact minimum-weight perfect matching for arbitrary undirected graphs.
//!
//! The solver iterates a simple outer loop: solve a degree-constrained
//! relaxation on the current contracted graph, then either terminate (the
//! optimum is integral), expand a blossom whose node is over-covered, or
//! contract an odd cycle of half-valued edges into a new blossom. The
//! relaxation itself is solved by exact min-sum message passing on an
//! edge-doubled model (with an exhaustive enumeration backend as a
//! cross-check), and all arithmetic is exact: integer-scaled perturbed
//! weights, dyadic-rational duals, and a lexicographic tie-break channel
//! instead of floating-point noise.
//!
//! Determinism is a hard guarantee: results, traces and reports are
//! byte-identical across runs, platforms and thread counts for a fixed
//! seed.

pub mod bp;
pub mod contraction;
pub mod driver;
pub mod graph;
pub mod numeric;
pub mod oracle;
pub mod relax;

pub use contraction::{ContractedGraph, NodeId, SolverState};
pub use driver::{
    solve_mwpm, solve_mwpm_observed, verify_matching, verify_result, MatchingResult, SolveConfig,
    SolveError, VerificationReport,
};
pub use graph::{perturb, PerturbedGraph, WeightedGraph};
pub use numeric::{Dyadic, TieBreakCost};
pub use relax::{Backend, HalfIntegralSolution, StepDecision};

/// Run `f` on a dedicated thread pool of the requested size when the
/// `parallel` feature is enabled and more than one thread was asked for;
/// plain sequential execution otherwise. Solver output never depends on
/// which path runs.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 1 {
            return rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool")
                .install(f);
        }
    }
    let _ = threads;
    f()
}
