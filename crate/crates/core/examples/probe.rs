// temporary probe: dump decode evolution on T6
use blossom_bp::contraction::SolverState;
use blossom_bp::graph::{perturb, WeightedGraph};
use blossom_bp::bp;

fn main() {
    let t6 = "p edge 6 7\ne 1 2 1\ne 2 3 1\ne 1 3 1\ne 4 5 1\ne 5 6 1\ne 4 6 1\ne 3 4 10\n";
    let g = WeightedGraph::parse(t6).unwrap();
    let state = SolverState::new(perturb(&g, 0, 1));
    let cg = state.build_contracted().unwrap();
    bp::debug_probe(&cg, 80);
}
