//! Problem-instance representation, input parsing, and the randomized
//! weight perturbation that makes intermediate relaxation optima unique.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

/// Simple undirected graph with integer base weights.
///
/// Vertices are `0..vertex_count` internally; the text format is 1-based.
/// Edge ids are positions in `edges` and never change.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightedGraph {
    pub vertex_count: usize,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: usize,
    pub u: usize,
    pub v: usize,
    pub weight: i64,
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate edge ({u}, {v})")]
    DuplicateEdge { line: usize, u: usize, v: usize },
    #[error("line {line}: endpoint {vertex} out of range 1..={max}")]
    EndpointOutOfRange {
        line: usize,
        vertex: usize,
        max: usize,
    },
    #[error("line {line}: self-loop at vertex {vertex}")]
    SelfLoop { line: usize, vertex: usize },
    #[error("expected {declared} edges, found {found}")]
    EdgeCountMismatch { declared: usize, found: usize },
    #[error("missing `p edge <n> <m>` header")]
    MissingHeader,
}

impl WeightedGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize, i64)>) -> Self {
        let edges = edges
            .into_iter()
            .enumerate()
            .map(|(id, (u, v, weight))| Edge { id, u, v, weight })
            .collect();
        WeightedGraph {
            vertex_count,
            edges,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Parse the DIMACS-like format:
    /// a `p edge <n> <m>` header, then `m` lines `e <u> <v> <w>` with
    /// 1-based endpoints; `c ...` lines are comments. An odd vertex count
    /// parses fine and is rejected at solve time.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges: Vec<Edge> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('c') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_ascii_whitespace().collect();
            match fields[0] {
                "p" => {
                    if header.is_some() {
                        return Err(ParseError::Syntax {
                            line,
                            msg: "duplicate header".into(),
                        });
                    }
                    if fields.len() != 4 || fields[1] != "edge" {
                        return Err(ParseError::Syntax {
                            line,
                            msg: format!("expected `p edge <n> <m>`, got `{trimmed}`"),
                        });
                    }
                    let n = parse_field(fields[2], line, "vertex count")?;
                    let m = parse_field(fields[3], line, "edge count")?;
                    header = Some((n, m));
                }
                "e" => {
                    let (n, _) = header.ok_or(ParseError::MissingHeader)?;
                    if fields.len() != 4 {
                        return Err(ParseError::Syntax {
                            line,
                            msg: format!("expected `e <u> <v> <w>`, got `{trimmed}`"),
                        });
                    }
                    let u: usize = parse_field(fields[1], line, "endpoint")?;
                    let v: usize = parse_field(fields[2], line, "endpoint")?;
                    let w: i64 = fields[3].parse().map_err(|_| ParseError::Syntax {
                        line,
                        msg: format!("bad weight `{}`", fields[3]),
                    })?;
                    for &x in &[u, v] {
                        if x == 0 || x > n {
                            return Err(ParseError::EndpointOutOfRange {
                                line,
                                vertex: x,
                                max: n,
                            });
                        }
                    }
                    if u == v {
                        return Err(ParseError::SelfLoop { line, vertex: u });
                    }
                    let key = (u.min(v), u.max(v));
                    if seen.insert(key, line).is_some() {
                        return Err(ParseError::DuplicateEdge {
                            line,
                            u: key.0,
                            v: key.1,
                        });
                    }
                    edges.push(Edge {
                        id: edges.len(),
                        u: u - 1,
                        v: v - 1,
                        weight: w,
                    });
                }
                _ => {
                    return Err(ParseError::Syntax {
                        line,
                        msg: format!("unknown line type `{}`", fields[0]),
                    });
                }
            }
        }

        let (n, m) = header.ok_or(ParseError::MissingHeader)?;
        if edges.len() != m {
            return Err(ParseError::EdgeCountMismatch {
                declared: m,
                found: edges.len(),
            });
        }
        Ok(WeightedGraph {
            vertex_count: n,
            edges,
        })
    }

    /// Render back to the input format; `parse(print(g)) == g`.
    pub fn print(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p edge {} {}", self.vertex_count, self.edges.len());
        for e in &self.edges {
            let _ = writeln!(out, "e {} {} {}", e.u + 1, e.v + 1, e.weight);
        }
        out
    }
}

fn parse_field(s: &str, line: usize, what: &str) -> Result<usize, ParseError> {
    s.parse().map_err(|_| ParseError::Syntax {
        line,
        msg: format!("bad {what} `{s}`"),
    })
}

/// The graph with integer-scaled, noise-perturbed weights.
///
/// Base weights are first shifted positive (`shift = max(0, 1 - min w)`),
/// then scaled: `W_e = (w_e + shift) * B + r_e` with `B = |E| * R + 1` and
/// `r_e` drawn uniformly from `[0, R)`. Since `B > |E| * (R - 1)`, the total
/// noise over any edge set stays below one scaled weight unit, so every
/// matching optimal under `W` is optimal under `w`. `R = 1` disables the
/// perturbation entirely.
#[derive(Clone, Debug)]
pub struct PerturbedGraph {
    pub base: WeightedGraph,
    pub scale: i64,
    pub shift: i64,
    pub noise: Vec<i64>,
    pub internal_weights: Vec<i64>,
    pub seed: u64,
    pub noise_range: u64,
}

impl PerturbedGraph {
    pub fn vertex_count(&self) -> usize {
        self.base.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.base.edges.len()
    }
}

/// Scale and perturb the instance weights. Pure function of
/// `(g, seed, noise_range)`: the noise stream is ChaCha8 keyed by `seed`,
/// sampled per edge in id order by rejection from `next_u64`.
pub fn perturb(g: &WeightedGraph, seed: u64, noise_range: u64) -> PerturbedGraph {
    assert!(noise_range >= 1, "noise range must be at least 1");
    assert!(!g.edges.is_empty(), "cannot perturb an empty graph");

    let min_w = g.edges.iter().map(|e| e.weight).min().unwrap();
    let shift = 0.max(1 - min_w);

    let m = g.edges.len() as i64;
    let scale = m
        .checked_mul(noise_range as i64)
        .and_then(|x| x.checked_add(1))
        .expect("scale overflow");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = Vec::with_capacity(g.edges.len());
    let mut internal_weights = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        let r = if noise_range == 1 {
            0
        } else {
            uniform_u64(&mut rng, noise_range) as i64
        };
        noise.push(r);
        let w = (e.weight + shift)
            .checked_mul(scale)
            .and_then(|x| x.checked_add(r))
            .expect("scaled weight overflow");
        internal_weights.push(w);
    }

    PerturbedGraph {
        base: g.clone(),
        scale,
        shift,
        noise,
        internal_weights,
        seed,
        noise_range,
    }
}

/// Unbiased uniform draw from `[0, range)` by rejection sampling on the
/// raw ChaCha stream. Platform-independent by construction.
fn uniform_u64(rng: &mut ChaCha8Rng, range: u64) -> u64 {
    debug_assert!(range >= 2);
    let zone = u64::MAX - (u64::MAX % range + 1) % range;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % range;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) const T6: &str = "c two unit triangles joined by a heavy bridge\n\
         p edge 6 7\n\
         e 1 2 1\n\
         e 2 3 1\n\
         e 1 3 1\n\
         e 4 5 1\n\
         e 5 6 1\n\
         e 4 6 1\n\
         e 3 4 10\n";

    #[test]
    fn parse_single_edge() {
        let g = WeightedGraph::parse("p edge 2 1\ne 1 2 5\n").unwrap();
        assert_eq!(g.vertex_count, 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!((g.edges[0].u, g.edges[0].v, g.edges[0].weight), (0, 1, 5));
    }

    #[test]
    fn parse_rejects_duplicate_edge() {
        let err = WeightedGraph::parse("p edge 4 2\ne 1 2 3\ne 1 2 4\n").unwrap_err();
        assert_eq!(
            err,
            ParseError::DuplicateEdge {
                line: 3,
                u: 1,
                v: 2
            }
        );
        // also in reversed orientation
        let err = WeightedGraph::parse("p edge 4 2\ne 1 2 3\ne 2 1 4\n").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateEdge { .. }));
    }

    #[test]
    fn parse_t6_fixture() {
        let g = WeightedGraph::parse(T6).unwrap();
        assert_eq!(g.vertex_count, 6);
        assert_eq!(g.edges.len(), 7);
        assert_eq!(g.edges[6].weight, 10);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(matches!(
            WeightedGraph::parse("e 1 2 3\n"),
            Err(ParseError::MissingHeader)
        ));
        assert!(matches!(
            WeightedGraph::parse("p edge 2 1\ne 1 3 5\n"),
            Err(ParseError::EndpointOutOfRange { vertex: 3, .. })
        ));
        assert!(matches!(
            WeightedGraph::parse("p edge 2 1\ne 1 1 5\n"),
            Err(ParseError::SelfLoop { vertex: 1, .. })
        ));
        assert!(matches!(
            WeightedGraph::parse("p edge 2 2\ne 1 2 5\n"),
            Err(ParseError::EdgeCountMismatch {
                declared: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn odd_vertex_count_parses() {
        let g = WeightedGraph::parse("p edge 3 3\ne 1 2 1\ne 2 3 1\ne 1 3 1\n").unwrap();
        assert_eq!(g.vertex_count, 3);
    }

    #[test]
    fn perturb_r1_disables_noise() {
        let g = WeightedGraph::parse("p edge 2 1\ne 1 2 5\n").unwrap();
        let pg = perturb(&g, 12345, 1);
        assert_eq!(pg.scale, 2); // B = |E| * R + 1 = 2
        assert_eq!(pg.noise, vec![0]);
        assert_eq!(pg.internal_weights, vec![10]);
    }

    #[test]
    fn perturb_decomposition_identity() {
        let g = WeightedGraph::parse(T6).unwrap();
        let r = 1u64 << 20;
        let pg = perturb(&g, 7, r);
        for (i, e) in g.edges.iter().enumerate() {
            let w = pg.internal_weights[i];
            assert_eq!(w % pg.scale, pg.noise[i]);
            assert!(pg.noise[i] < r as i64);
            assert_eq!(w / pg.scale, e.weight); // shift is 0 here
        }
    }

    #[test]
    fn perturb_is_deterministic() {
        let g = WeightedGraph::parse(T6).unwrap();
        let a = perturb(&g, 99, 1 << 20);
        let b = perturb(&g, 99, 1 << 20);
        assert_eq!(a.noise, b.noise);
        assert_eq!(a.internal_weights, b.internal_weights);
        let c = perturb(&g, 100, 1 << 20);
        assert_ne!(a.noise, c.noise);
    }

    #[test]
    fn negative_weights_are_shifted() {
        let g = WeightedGraph::parse("p edge 2 1\ne 1 2 -5\n").unwrap();
        let pg = perturb(&g, 0, 1);
        assert_eq!(pg.shift, 6); // min weight -5 -> shift to +1
        assert_eq!(pg.internal_weights, vec![2]); // 1 * B with B = 2
    }

    proptest! {
        #[test]
        fn parse_print_round_trip(
            n in 2usize..10,
            edge_mask in proptest::collection::vec(any::<bool>(), 45),
            weights in proptest::collection::vec(-1000i64..1000, 45),
        ) {
            let mut edges = Vec::new();
            let mut k = 0;
            for u in 0..n {
                for v in (u + 1)..n {
                    if edge_mask[k] {
                        edges.push((u, v, weights[k]));
                    }
                    k += 1;
                }
            }
            prop_assume!(!edges.is_empty());
            let g = WeightedGraph::new(n, edges);
            let round = WeightedGraph::parse(&g.print()).unwrap();
            prop_assert_eq!(g, round);
        }
    }
}
