//! Min-sum message passing on the edge-doubled graph.
//!
//! Each contracted edge is duplicated into two binary variables (copies);
//! each contracted node becomes one factor constraining the sum of its
//! incident copies to exactly two (non-blossom) or at least two (blossom).
//! Copy one carries tie-break cost 0 and copy two cost 1, which makes the
//! otherwise copy-symmetric optimum strictly unique. Minimizing total cost
//! over this model is the relaxation on the contracted graph: the decoded
//! copy sum per edge is exactly its half-unit value.
//!
//! Messages are exact cost differences `m(1) - m(0)` with the infeasible
//! cases made explicit (an assignment can be forced on, forced off, or the
//! variable can be dead when no feasible completion exists either way).
//! A round is a pure function of the previous round; within a round every
//! factor update is independent, which is where the data parallelism lives.

use crate::contraction::ContractedGraph;
use crate::numeric::TieBreakCost;
use crate::relax::{HalfIntegralSolution, RelaxConfig, RelaxError};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FactorMode {
    /// Non-blossom node: incident copies sum to exactly 2.
    Exact2,
    /// Blossom node: incident copies sum to at least 2.
    AtLeast2,
}

#[derive(Clone, Debug)]
pub struct VarNode {
    pub cost: TieBreakCost,
    /// The two (factor, slot) incidences of this copy.
    pub ports: [(u32, u32); 2],
    pub edge: u32,
}

#[derive(Clone, Debug)]
pub struct FactorNode {
    pub mode: FactorMode,
    pub vars: Vec<u32>,
}

/// Factor graph of the edge-doubled model: one variable per edge copy, one
/// factor per contracted node. Every variable touches exactly two factors.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    pub vars: Vec<VarNode>,
    pub factors: Vec<FactorNode>,
    offsets: Vec<usize>,
    total_slots: usize,
}

impl FactorGraph {
    fn slot_index(&self, factor: u32, slot: u32) -> usize {
        self.offsets[factor as usize] + slot as usize
    }
}

/// Normalized message `m(1) - m(0)` over the extended cost line.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum MsgDiff {
    Finite(TieBreakCost),
    /// Assignment 0 is infeasible downstream: the copy is forced on.
    ForcedOn,
    /// Assignment 1 is infeasible downstream: the copy is forced off.
    ForcedOff,
    /// Neither assignment has a feasible completion.
    Dead,
}

/// Classification of the variable-to-factor value `cost + other message`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Incoming {
    Free(TieBreakCost),
    On,
    Off,
    Dead,
}

/// Build the factor graph for a contracted graph. A degree-zero node has no
/// feasible assignment at all, which surfaces immediately as infeasibility.
pub fn build_gm(cg: &ContractedGraph) -> Result<FactorGraph, RelaxError> {
    let mut factors: Vec<FactorNode> = cg
        .is_blossom
        .iter()
        .map(|&b| FactorNode {
            mode: if b {
                FactorMode::AtLeast2
            } else {
                FactorMode::Exact2
            },
            vars: Vec::new(),
        })
        .collect();

    let mut vars = Vec::with_capacity(cg.edge_count() * 2);
    for (e, edge) in cg.edges.iter().enumerate() {
        let (a, b) = edge.endpoints;
        for copy in 0..2u32 {
            let id = vars.len() as u32;
            let slot_a = factors[a].vars.len() as u32;
            factors[a].vars.push(id);
            let slot_b = factors[b].vars.len() as u32;
            factors[b].vars.push(id);
            vars.push(VarNode {
                cost: TieBreakCost::new(edge.w_dagger.clone(), copy as i64),
                ports: [(a as u32, slot_a), (b as u32, slot_b)],
                edge: e as u32,
            });
        }
    }

    if factors.iter().any(|f| f.vars.is_empty()) {
        return Err(RelaxError::Infeasible);
    }

    let mut offsets = Vec::with_capacity(factors.len());
    let mut total_slots = 0;
    for f in &factors {
        offsets.push(total_slots);
        total_slots += f.vars.len();
    }

    Ok(FactorGraph {
        vars,
        factors,
        offsets,
        total_slots,
    })
}

fn combine(cost: &TieBreakCost, msg: &MsgDiff) -> Incoming {
    match msg {
        MsgDiff::Finite(d) => Incoming::Free(cost + d),
        MsgDiff::ForcedOn => Incoming::On,
        MsgDiff::ForcedOff => Incoming::Off,
        MsgDiff::Dead => Incoming::Dead,
    }
}

/// Up to the three smallest free values, enough to answer any "smallest one
/// or two excluding one slot" query exactly.
#[derive(Clone, Debug, Default)]
struct Smallest3 {
    entries: Vec<(TieBreakCost, usize)>,
}

impl Smallest3 {
    fn push(&mut self, value: TieBreakCost, slot: usize) {
        let pos = self
            .entries
            .iter()
            .position(|(v, _)| &value < v)
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, (value, slot));
        self.entries.truncate(3);
    }

    /// Sum of the `k` smallest entries whose slot differs from `excl`;
    /// `None` when fewer than `k` such entries were retained (the caller
    /// guarantees the retained prefix is exhaustive in that case).
    fn min_sum_excluding(&self, k: usize, excl: usize) -> Option<TieBreakCost> {
        if k == 0 {
            return Some(TieBreakCost::zero());
        }
        let mut acc = TieBreakCost::zero();
        let mut taken = 0;
        for (v, slot) in &self.entries {
            if *slot == excl {
                continue;
            }
            acc = &acc + v;
            taken += 1;
            if taken == k {
                return Some(acc);
            }
        }
        None
    }
}

/// Per-factor aggregates over the incoming classifications, letting every
/// outgoing message be derived in constant time.
struct FactorAgg {
    dead: usize,
    on: usize,
    free_len: usize,
    smallest_free: Smallest3,
    neg_sum: TieBreakCost,
    neg_count: usize,
    smallest_nonneg: Smallest3,
}

fn aggregate(incoming: &[Incoming]) -> FactorAgg {
    let mut agg = FactorAgg {
        dead: 0,
        on: 0,
        free_len: 0,
        smallest_free: Smallest3::default(),
        neg_sum: TieBreakCost::zero(),
        neg_count: 0,
        smallest_nonneg: Smallest3::default(),
    };
    for (slot, inc) in incoming.iter().enumerate() {
        match inc {
            Incoming::Dead => agg.dead += 1,
            Incoming::On => agg.on += 1,
            Incoming::Off => {}
            Incoming::Free(d) => {
                agg.free_len += 1;
                agg.smallest_free.push(d.clone(), slot);
                if d.is_negative() {
                    agg.neg_sum = &agg.neg_sum + d;
                    agg.neg_count += 1;
                } else {
                    agg.smallest_nonneg.push(d.clone(), slot);
                }
            }
        }
    }
    agg
}

/// Minimum cost of selecting ones among the *other* incident copies so that
/// the target's assignment `c` completes the factor constraint; `None` is
/// the absorbing infeasible value. Forced-on copies sit in every admissible
/// selection and forced-off copies in none, so both cancel between the two
/// assignments and only free copies contribute.
fn mu(
    mode: FactorMode,
    agg: &FactorAgg,
    incoming: &[Incoming],
    target: usize,
    c: u32,
) -> Option<TieBreakCost> {
    let t = &incoming[target];
    let forced_on = agg.on - matches!(t, Incoming::On) as usize;
    let free_len = agg.free_len - matches!(t, Incoming::Free(_)) as usize;
    let k = (2 - c) as usize;

    match mode {
        FactorMode::Exact2 => {
            if forced_on > k {
                return None;
            }
            let extra = k - forced_on;
            if extra > free_len {
                return None;
            }
            agg.smallest_free.min_sum_excluding(extra, target)
        }
        FactorMode::AtLeast2 => {
            let mut base = agg.neg_sum.clone();
            let mut negs = agg.neg_count;
            if let Incoming::Free(d) = t {
                if d.is_negative() {
                    base = &base - d;
                    negs -= 1;
                }
            }
            let need = k.saturating_sub(forced_on);
            if negs >= need {
                return Some(base);
            }
            let pad = need - negs;
            let nonneg_len = free_len - negs;
            if pad > nonneg_len {
                return None;
            }
            agg.smallest_nonneg
                .min_sum_excluding(pad, target)
                .map(|s| &base + &s)
        }
    }
}

/// One factor-to-variable update in normalized difference form.
fn factor_message(
    mode: FactorMode,
    agg: &FactorAgg,
    incoming: &[Incoming],
    target: usize,
) -> MsgDiff {
    let dead = agg.dead - matches!(incoming[target], Incoming::Dead) as usize;
    if dead > 0 {
        return MsgDiff::Dead;
    }
    let mu1 = mu(mode, agg, incoming, target, 1);
    let mu0 = mu(mode, agg, incoming, target, 0);
    match (mu1, mu0) {
        (Some(a), Some(b)) => MsgDiff::Finite(&a - &b),
        (Some(_), None) => MsgDiff::ForcedOn,
        (None, Some(_)) => MsgDiff::ForcedOff,
        (None, None) => MsgDiff::Dead,
    }
}

fn factor_round(fg: &FactorGraph, f_idx: usize, prev: &[MsgDiff]) -> Vec<MsgDiff> {
    let f = &fg.factors[f_idx];
    let incoming: Vec<Incoming> = f
        .vars
        .iter()
        .map(|&v| {
            let var = &fg.vars[v as usize];
            let (of, os) = var.ports[if var.ports[0].0 as usize == f_idx { 1 } else { 0 }];
            combine(&var.cost, &prev[fg.slot_index(of, os)])
        })
        .collect();
    let agg = aggregate(&incoming);
    (0..f.vars.len())
        .map(|s| factor_message(f.mode, &agg, &incoming, s))
        .collect()
}

// decode codes, one byte per variable so round-over-round comparison is cheap
const DEC_ZERO: u8 = 0;
const DEC_ONE: u8 = 1;
const DEC_TIE: u8 = 2;
const DEC_DEAD: u8 = 3;

fn decode(fg: &FactorGraph, msgs: &[MsgDiff]) -> Vec<u8> {
    fg.vars
        .iter()
        .map(|var| {
            let m1 = &msgs[fg.slot_index(var.ports[0].0, var.ports[0].1)];
            let m2 = &msgs[fg.slot_index(var.ports[1].0, var.ports[1].1)];
            match (m1, m2) {
                (MsgDiff::Dead, _) | (_, MsgDiff::Dead) => DEC_DEAD,
                (MsgDiff::ForcedOn, MsgDiff::ForcedOff)
                | (MsgDiff::ForcedOff, MsgDiff::ForcedOn) => DEC_DEAD,
                (MsgDiff::ForcedOn, _) | (_, MsgDiff::ForcedOn) => DEC_ONE,
                (MsgDiff::ForcedOff, _) | (_, MsgDiff::ForcedOff) => DEC_ZERO,
                (MsgDiff::Finite(a), MsgDiff::Finite(b)) => {
                    let belief = &(&var.cost + a) + b;
                    if belief.is_negative() {
                        DEC_ONE
                    } else if belief.is_zero() {
                        DEC_TIE
                    } else {
                        DEC_ZERO
                    }
                }
            }
        })
        .collect()
}

/// Synchronous min-sum rounds until the decoded assignment is identical for
/// `stable_window` consecutive rounds. A stable tie means the model optimum
/// is not unique; a stable dead variable means the constraints admit no
/// assignment at all.
pub fn run_min_sum(
    fg: &FactorGraph,
    max_rounds: usize,
    stable_window: usize,
    threads: usize,
) -> Result<(Vec<u8>, usize), RelaxError> {
    let mut msgs: Vec<MsgDiff> = vec![MsgDiff::Finite(TieBreakCost::zero()); fg.total_slots];
    let mut last_decode: Option<Vec<u8>> = None;
    let mut streak = 0usize;

    for round in 1..=max_rounds {
        msgs = next_round(fg, &msgs, threads);
        let decoded = decode(fg, &msgs);
        if last_decode.as_deref() == Some(&decoded[..]) {
            streak += 1;
        } else {
            last_decode = Some(decoded);
            streak = 1;
        }
        if streak >= stable_window {
            let stable = last_decode.unwrap();
            if stable.contains(&DEC_DEAD) {
                return Err(RelaxError::Infeasible);
            }
            if stable.contains(&DEC_TIE) {
                return Err(RelaxError::NonUnique);
            }
            return Ok((stable, round));
        }
    }
    Err(RelaxError::NonConvergence { rounds: max_rounds })
}

#[cfg(feature = "parallel")]
fn next_round(fg: &FactorGraph, prev: &[MsgDiff], threads: usize) -> Vec<MsgDiff> {
    use rayon::prelude::*;
    if threads > 1 {
        let per_factor: Vec<Vec<MsgDiff>> = (0..fg.factors.len())
            .into_par_iter()
            .map(|f| factor_round(fg, f, prev))
            .collect();
        per_factor.into_iter().flatten().collect()
    } else {
        (0..fg.factors.len())
            .flat_map(|f| factor_round(fg, f, prev))
            .collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn next_round(fg: &FactorGraph, prev: &[MsgDiff], _threads: usize) -> Vec<MsgDiff> {
    (0..fg.factors.len())
        .flat_map(|f| factor_round(fg, f, prev))
        .collect()
}

/// Fold the per-copy decisions back to half-units (`x_e = z_e1 + z_e2`) and
/// re-derive the exact objective from the contracted weights. A decoded
/// vector that violates a node constraint, or a half edge whose cheaper
/// copy is off, indicates a decoder bug and is reported as such.
pub fn decode_half(
    fg: &FactorGraph,
    decisions: &[u8],
    cg: &ContractedGraph,
) -> Result<HalfIntegralSolution, RelaxError> {
    let mut half_units = vec![0u8; cg.edge_count()];
    for (v, var) in fg.vars.iter().enumerate() {
        if decisions[v] == DEC_ONE {
            half_units[var.edge as usize] += 1;
        }
    }
    for (e, &h) in half_units.iter().enumerate() {
        if h == 1 && decisions[2 * e] != DEC_ONE {
            return Err(RelaxError::Internal(format!(
                "half edge {e} decoded with the dearer copy on"
            )));
        }
    }
    let inc = cg.incidence();
    for (n, edges) in inc.iter().enumerate() {
        let sum: u32 = edges.iter().map(|&e| half_units[e] as u32).sum();
        let ok = if cg.is_blossom[n] { sum >= 2 } else { sum == 2 };
        if !ok {
            return Err(RelaxError::Internal(format!(
                "decoded assignment violates the degree constraint at node {n} (sum {sum})"
            )));
        }
    }
    Ok(HalfIntegralSolution::from_half_units(cg, half_units))
}

/// Temporary diagnostic: print the decode evolution round by round.
#[doc(hidden)]
pub fn debug_probe(cg: &ContractedGraph, rounds: usize) {
    let fg = build_gm(cg).unwrap();
    let mut msgs: Vec<MsgDiff> = vec![MsgDiff::Finite(TieBreakCost::zero()); fg.total_slots];
    for round in 1..=rounds {
        msgs = next_round(&fg, &msgs, 1);
        let decoded = decode(&fg, &msgs);
        let s: String = decoded
            .iter()
            .map(|&d| match d {
                DEC_ZERO => '0',
                DEC_ONE => '1',
                DEC_TIE => '?',
                _ => 'X',
            })
            .collect();
        println!("round {round:3}: {s}");
        if false {
            for (i, m) in msgs.iter().enumerate() {
                println!("   msg[{i}] = {m:?}");
            }
        }
    }
}

/// Full backend: build the model, iterate to a stable decode, fold back.
pub fn solve_bp(
    cg: &ContractedGraph,
    cfg: &RelaxConfig,
) -> Result<(HalfIntegralSolution, usize), RelaxError> {
    let fg = build_gm(cg)?;
    let window = cfg.bp_stable_window.unwrap_or(cg.node_count() + 5);
    let (decisions, rounds) = run_min_sum(&fg, cfg.bp_max_rounds, window, cfg.threads)?;
    let solution = decode_half(&fg, &decisions, cg)?;
    Ok((solution, rounds))
}
