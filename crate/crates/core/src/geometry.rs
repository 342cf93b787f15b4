//! Molecules and their cutoff graphs.
//!
//! A directed edge `j -> i` carries `rel_vec = r_i - r_j`, the direction in
//! which its message flows, and the distance between the two atoms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Atoms closer than this are treated as coincident.
pub const COINCIDENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("molecule has no atoms")]
    Empty,
    #[error("atom {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("{what} has {got} rows for {atoms} atoms")]
    LabelShape {
        what: &'static str,
        got: usize,
        atoms: usize,
    },
    #[error("atoms {0} and {1} coincide")]
    Degenerate(usize, usize),
    #[error("cutoff must be positive, got {0}")]
    BadCutoff(f64),
    #[error("neighbor limit must be at least 1")]
    BadNeighborLimit,
    #[error("bond ({0}, {1}) is not a valid pair of atoms")]
    BadBond(usize, usize),
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn mat_vec(q: &Mat3, v: Vec3) -> Vec3 {
    [dot(q[0], v), dot(q[1], v), dot(q[2], v)]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

/// `Q · A · Qᵀ`
pub fn conjugate(q: &Mat3, a: &Mat3) -> Mat3 {
    mat_mul(&mat_mul(q, a), &transpose(q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub forces: Option<Vec<Vec3>>,
    #[serde(default)]
    pub polarizability: Option<Mat3>,
}

impl Molecule {
    pub fn new(atomic_numbers: Vec<u32>, positions: Vec<Vec3>) -> Result<Self, GeometryError> {
        let mol = Self {
            atomic_numbers,
            positions,
            energy: None,
            forces: None,
            polarizability: None,
        };
        mol.validate()?;
        Ok(mol)
    }

    pub fn with_energy(mut self, e: f64) -> Self {
        self.energy = Some(e);
        self
    }

    pub fn with_forces(mut self, f: Vec<Vec3>) -> Result<Self, GeometryError> {
        self.forces = Some(f);
        self.validate()?;
        Ok(self)
    }

    pub fn with_polarizability(mut self, a: Mat3) -> Self {
        self.polarizability = Some(a);
        self
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.positions.is_empty() {
            return Err(GeometryError::Empty);
        }
        if self.atomic_numbers.len() != self.positions.len() {
            return Err(GeometryError::LabelShape {
                what: "atomic numbers",
                got: self.atomic_numbers.len(),
                atoms: self.positions.len(),
            });
        }
        if let Some(i) = self
            .positions
            .iter()
            .position(|p| p.iter().any(|x| !x.is_finite()))
        {
            return Err(GeometryError::NonFinite(i));
        }
        if let Some(f) = &self.forces {
            if f.len() != self.positions.len() {
                return Err(GeometryError::LabelShape {
                    what: "forces",
                    got: f.len(),
                    atoms: self.positions.len(),
                });
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.n_atoms() as f64;
        let s = self.positions.iter().fold([0.0; 3], |acc, &p| add(acc, p));
        scale(s, 1.0 / n)
    }

    pub fn translated(&self, t: Vec3) -> Self {
        let mut m = self.clone();
        for p in &mut m.positions {
            *p = add(*p, t);
        }
        m
    }

    /// Applies `q` to coordinates and co-rotates vector and tensor labels.
    pub fn transformed(&self, q: &Mat3) -> Self {
        let mut m = self.clone();
        for p in &mut m.positions {
            *p = mat_vec(q, *p);
        }
        if let Some(f) = &mut m.forces {
            for v in f.iter_mut() {
                *v = mat_vec(q, *v);
            }
        }
        if let Some(a) = &mut m.polarizability {
            *a = conjugate(q, a);
        }
        m
    }

    /// Relabels atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &Vec<Vec3>| perm.iter().map(|&k| v[k]).collect::<Vec<_>>();
        Self {
            atomic_numbers: perm.iter().map(|&k| self.atomic_numbers[k]).collect(),
            positions: pick(&self.positions),
            energy: self.energy,
            forces: self.forces.as_ref().map(pick),
            polarizability: self.polarizability,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// `r_dst - r_src`
    pub rel_vec: Vec3,
    pub dist: f64,
}

/// Unit vector along the edge.
pub fn relative_direction(edge: &Edge) -> Vec3 {
    scale(edge.rel_vec, 1.0 / edge.dist)
}

/// Directed cutoff graph of one molecule. Edges are grouped by destination
/// atom in ascending order; within a destination they are sorted by distance,
/// ties by source index.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularGraph {
    pub n_atoms: usize,
    pub edges: Vec<Edge>,
    pub cutoff: f64,
    pub n_max: usize,
}

fn make_edge(pos: &[Vec3], src: usize, dst: usize) -> Edge {
    let rel_vec = sub(pos[dst], pos[src]);
    Edge {
        src,
        dst,
        rel_vec,
        dist: norm(rel_vec),
    }
}

/// Keeps, for every atom, incoming edges from its `n_max` nearest neighbors
/// within `cutoff` (inclusive).
pub fn build_graph(mol: &Molecule, cutoff: f64, n_max: usize) -> Result<MolecularGraph, GeometryError> {
    if !(cutoff > 0.0) {
        return Err(GeometryError::BadCutoff(cutoff));
    }
    if n_max == 0 {
        return Err(GeometryError::BadNeighborLimit);
    }
    mol.validate()?;
    let pos = &mol.positions;
    let n = pos.len();
    let mut edges = Vec::new();
    let mut cand: Vec<Edge> = Vec::new();
    for i in 0..n {
        cand.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let e = make_edge(pos, j, i);
            if e.dist <= COINCIDENT_TOL {
                return Err(GeometryError::Degenerate(j.min(i), j.max(i)));
            }
            if e.dist <= cutoff {
                cand.push(e);
            }
        }
        cand.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.src.cmp(&b.src)));
        edges.extend(cand.iter().take(n_max));
    }
    Ok(MolecularGraph {
        n_atoms: n,
        edges,
        cutoff,
        n_max,
    })
}

impl MolecularGraph {
    /// Graph over an explicit bond list; every bond yields both directions.
    pub fn from_bonds(mol: &Molecule, bonds: &[(usize, usize)], cutoff: f64) -> Result<Self, GeometryError> {
        mol.validate()?;
        let n = mol.n_atoms();
        let mut edges = Vec::with_capacity(bonds.len() * 2);
        for &(a, b) in bonds {
            if a == b || a >= n || b >= n {
                return Err(GeometryError::BadBond(a, b));
            }
            for (src, dst) in [(a, b), (b, a)] {
                let e = make_edge(&mol.positions, src, dst);
                if e.dist <= COINCIDENT_TOL {
                    return Err(GeometryError::Degenerate(a.min(b), a.max(b)));
                }
                edges.push(e);
            }
        }
        edges.sort_by(|x, y| {
            x.dst
                .cmp(&y.dst)
                .then(x.dist.total_cmp(&y.dist))
                .then(x.src.cmp(&y.src))
        });
        let n_max = (0..n)
            .map(|i| edges.iter().filter(|e| e.dst == i).count())
            .max()
            .unwrap_or(0)
            .max(1);
        Ok(Self {
            n_atoms: n,
            edges,
            cutoff,
            n_max,
        })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Indices of edges arriving at each atom.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.n_atoms];
        for (k, e) in self.edges.iter().enumerate() {
            inc[e.dst].push(k);
        }
        inc
    }

    /// Unordered atom pairs `(u, v)`, `u < v`, joined in either direction.
    pub fn undirected_pairs(&self) -> Vec<[usize; 2]> {
        let mut pairs: Vec<[usize; 2]> = self
            .edges
            .iter()
            .map(|e| [e.src.min(e.dst), e.src.max(e.dst)])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}
