//! Line graphs of molecular graphs.
//!
//! Two views are provided. [`build_triplets`] is what the network consumes:
//! ordered pairs of directed bonds that end on the same atom. [`lift`] is the
//! textbook construction on undirected simple graphs, carried together with a
//! coordinate embedding so it can be iterated to any depth.

use thiserror::Error;

use crate::geometry::{add, norm, scale, sub, MolecularGraph, Molecule, Vec3, COINCIDENT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineGraphError {
    #[error("level {0} has no edges to lift")]
    EmptyLevel(usize),
    #[error("expected {expected} {what} weights, got {got}")]
    WeightCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("triplet around atom {center} has coincident outer atoms {a} and {b}")]
    Degenerate { center: usize, a: usize, b: usize },
}

/// Bond `sender = (k -> i)` passing a message to bond `receiver = (j -> i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triplet {
    pub receiver: usize,
    pub sender: usize,
    pub center: usize,
    /// `r_j - r_k`
    pub rel_vec: Vec3,
    pub dist: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TripletList {
    pub triplets: Vec<Triplet>,
}

impl TripletList {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Each bond pair once, as `(a, b)` with `a < b`, in triplet order.
    pub fn unordered(&self) -> Vec<(usize, usize)> {
        self.triplets
            .iter()
            .filter(|t| t.receiver < t.sender)
            .map(|t| (t.receiver, t.sender))
            .collect()
    }
}

/// All ordered pairs of distinct bonds sharing a destination atom, ordered by
/// center atom, then receiving bond, then sending bond.
pub fn build_triplets(g: &MolecularGraph) -> Result<TripletList, LineGraphError> {
    let mut triplets = Vec::new();
    for (center, inc) in g.incoming().iter().enumerate() {
        for &a in inc {
            for &b in inc {
                if a == b {
                    continue;
                }
                let (j, k) = (g.edges[a].src, g.edges[b].src);
                // (r_i - r_k) - (r_i - r_j)
                let rel_vec = sub(g.edges[b].rel_vec, g.edges[a].rel_vec);
                let dist = norm(rel_vec);
                if dist <= COINCIDENT_TOL {
                    return Err(LineGraphError::Degenerate { center, a: j, b: k });
                }
                triplets.push(Triplet {
                    receiver: a,
                    sender: b,
                    center,
                    rel_vec,
                    dist,
                });
            }
        }
    }
    Ok(TripletList { triplets })
}

/// Scalar weights for [`aggregate_directional`]: one per directed bond and
/// one per unordered bond pair (indexed as in [`TripletList::unordered`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalWeights {
    pub bond: Vec<f64>,
    pub pair: Vec<f64>,
}

/// Per-atom sum of weighted bond vectors plus weighted sums of bond pairs:
/// `Σ_j w_j·r_ji + Σ_{j<k} w_jk·(r_ji + r_ki)`.
pub fn aggregate_directional(
    g: &MolecularGraph,
    triplets: &TripletList,
    weights: &DirectionalWeights,
) -> Result<Vec<Vec3>, LineGraphError> {
    let pairs = triplets.unordered();
    if weights.bond.len() != g.n_edges() {
        return Err(LineGraphError::WeightCount {
            what: "bond",
            expected: g.n_edges(),
            got: weights.bond.len(),
        });
    }
    if weights.pair.len() != pairs.len() {
        return Err(LineGraphError::WeightCount {
            what: "pair",
            expected: pairs.len(),
            got: weights.pair.len(),
        });
    }
    let mut out = vec![[0.0; 3]; g.n_atoms];
    for (e, &w) in g.edges.iter().zip(&weights.bond) {
        out[e.dst] = add(out[e.dst], scale(e.rel_vec, w));
    }
    for (&(a, b), &w) in pairs.iter().zip(&weights.pair) {
        let (ea, eb) = (&g.edges[a], &g.edges[b]);
        out[ea.dst] = add(out[ea.dst], scale(add(ea.rel_vec, eb.rel_vec), w));
    }
    Ok(out)
}

/// Undirected simple graph with edges stored as sorted `[u, v]`, `u < v`,
/// in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleGraph {
    pub n_vertices: usize,
    pub edges: Vec<[usize; 2]>,
}

impl SimpleGraph {
    pub fn new(n_vertices: usize, edges: impl IntoIterator<Item = [usize; 2]>) -> Self {
        let mut edges: Vec<[usize; 2]> = edges
            .into_iter()
            .filter(|[u, v]| u != v)
            .map(|[u, v]| [u.min(v), u.max(v)])
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { n_vertices, edges }
    }
}

/// One level `G^(n)` of the iterated line-graph hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct LineGraphLevel {
    pub level: usize,
    pub graph: SimpleGraph,
    /// Coordinate of every vertex.
    pub embedding: Vec<Vec3>,
}

/// Coefficients for the endpoints of an edge when embedding it as a vertex of
/// the next level. The midpoint keeps the embedding translation-consistent.
pub const EMBED_COEFFS: (f64, f64) = (0.5, 0.5);

impl LineGraphLevel {
    /// Level 0: atoms, with every pair joined in the molecular graph.
    pub fn base(g: &MolecularGraph, mol: &Molecule) -> Self {
        Self {
            level: 0,
            graph: SimpleGraph::new(g.n_atoms, g.undirected_pairs()),
            embedding: mol.positions.clone(),
        }
    }
}

/// `G^(n) -> G^(n+1) = L[G^(n)]`: edges become vertices, and two of them are
/// adjacent when they share an endpoint.
pub fn lift(level: &LineGraphLevel) -> Result<LineGraphLevel, LineGraphError> {
    let g = &level.graph;
    if g.edges.is_empty() {
        return Err(LineGraphError::EmptyLevel(level.level));
    }
    let mut incident = vec![Vec::new(); g.n_vertices];
    for (k, &[u, v]) in g.edges.iter().enumerate() {
        incident[u].push(k);
        incident[v].push(k);
    }
    let mut edges = Vec::new();
    for inc in &incident {
        for (x, &p) in inc.iter().enumerate() {
            for &q in &inc[x + 1..] {
                edges.push([p, q]);
            }
        }
    }
    let (au, av) = EMBED_COEFFS;
    let embedding = g
        .edges
        .iter()
        .map(|&[u, v]| add(scale(level.embedding[u], au), scale(level.embedding[v], av)))
        .collect();
    Ok(LineGraphLevel {
        level: level.level + 1,
        graph: SimpleGraph::new(g.edges.len(), edges),
        embedding,
    })
}

/// `G^(0), …, G^(depth)`.
pub fn hierarchy(base: LineGraphLevel, depth: usize) -> Result<Vec<LineGraphLevel>, LineGraphError> {
    let mut levels = vec![base];
    for _ in 0..depth {
        let next = lift(levels.last().expect("non-empty"))?;
        levels.push(next);
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_graph;

    fn level(n: usize, edges: &[[usize; 2]]) -> LineGraphLevel {
        LineGraphLevel {
            level: 0,
            graph: SimpleGraph::new(n, edges.iter().copied()),
            embedding: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
        }
    }

    #[test]
    fn path_graph_lifts_to_single_edge() {
        let l1 = lift(&level(3, &[[0, 1], [1, 2]])).unwrap();
        assert_eq!(l1.graph.n_vertices, 2);
        assert_eq!(l1.graph.edges, vec![[0, 1]]);
        assert_eq!(l1.embedding, vec![[0.5, 0.0, 0.0], [1.5, 0.0, 0.0]]);
    }

    #[test]
    fn triangle_is_its_own_line_graph() {
        let l1 = lift(&level(3, &[[0, 1], [1, 2], [0, 2]])).unwrap();
        assert_eq!(l1.graph.n_vertices, 3);
        assert_eq!(l1.graph.edges.len(), 3);
    }

    #[test]
    fn edgeless_level_cannot_lift() {
        assert_eq!(lift(&level(2, &[])), Err(LineGraphError::EmptyLevel(0)));
    }

    #[test]
    fn two_atoms_have_no_triplets() {
        let m = Molecule::new(vec![1, 1], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        let g = build_graph(&m, 5.0, 32).unwrap();
        assert!(build_triplets(&g).unwrap().is_empty());
    }

    #[test]
    fn weight_count_is_checked() {
        let m = Molecule::new(vec![1, 1], vec![[0.0; 3], [1.0, 0.0, 0.0]]).unwrap();
        let g = build_graph(&m, 5.0, 32).unwrap();
        let t = build_triplets(&g).unwrap();
        let w = DirectionalWeights {
            bond: vec![1.0],
            pair: vec![],
        };
        assert!(matches!(
            aggregate_directional(&g, &t, &w),
            Err(LineGraphError::WeightCount { what: "bond", .. })
        ));
        let w = DirectionalWeights {
            bond: vec![0.0, 0.0],
            pair: vec![],
        };
        assert_eq!(aggregate_directional(&g, &t, &w).unwrap(), vec![[0.0; 3]; 2]);
    }
}
