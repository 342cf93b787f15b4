//! Several molecules packed into one disjoint graph.

use std::sync::Arc;

use crate::geometry::{build_graph, MolecularGraph, Molecule, Vec3};
use crate::linegraph::{build_triplets, TripletList};
use crate::Error;

/// Index arrays for a batch of molecules laid end to end. Atom, edge and
/// triplet numbering is global across the batch.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub n_atoms: usize,
    pub n_mols: usize,
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub atoms_per_mol: Vec<usize>,
    pub mol_of_atom: Arc<[usize]>,
    pub edge_src: Arc<[usize]>,
    pub edge_dst: Arc<[usize]>,
    /// Receiving bond of each triplet.
    pub trip_recv: Arc<[usize]>,
    /// Sending bond of each triplet.
    pub trip_send: Arc<[usize]>,
}

impl GraphBatch {
    /// Builds cutoff graphs and triplets for every molecule.
    pub fn new(mols: &[&Molecule], cutoff: f64, n_max: usize) -> Result<Self, Error> {
        let mut parts = Vec::with_capacity(mols.len());
        for &m in mols {
            let g = build_graph(m, cutoff, n_max)?;
            let t = build_triplets(&g)?;
            parts.push((m, g, t));
        }
        Ok(Self::from_parts(&parts))
    }

    /// Packs molecules whose graphs were built elsewhere (e.g. explicit bonds).
    pub fn from_graphs(items: &[(&Molecule, &MolecularGraph)]) -> Result<Self, Error> {
        let mut parts = Vec::with_capacity(items.len());
        for &(m, g) in items {
            parts.push((m, g.clone(), build_triplets(g)?));
        }
        Ok(Self::from_parts(&parts))
    }

    fn from_parts(parts: &[(&Molecule, MolecularGraph, TripletList)]) -> Self {
        let mut b = BatchBuilder::default();
        for (m, g, t) in parts {
            b.push(m, g, t);
        }
        b.finish()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_src.len()
    }

    pub fn n_triplets(&self) -> usize {
        self.trip_recv.len()
    }
}

#[derive(Default)]
struct BatchBuilder {
    atomic_numbers: Vec<u32>,
    positions: Vec<Vec3>,
    atoms_per_mol: Vec<usize>,
    mol_of_atom: Vec<usize>,
    edge_src: Vec<usize>,
    edge_dst: Vec<usize>,
    trip_recv: Vec<usize>,
    trip_send: Vec<usize>,
}

impl BatchBuilder {
    fn push(&mut self, m: &Molecule, g: &MolecularGraph, t: &TripletList) {
        let atom0 = self.positions.len();
        let edge0 = self.edge_src.len();
        let mol = self.atoms_per_mol.len();
        self.atomic_numbers.extend_from_slice(&m.atomic_numbers);
        self.positions.extend_from_slice(&m.positions);
        self.atoms_per_mol.push(m.n_atoms());
        self.mol_of_atom.extend(std::iter::repeat(mol).take(m.n_atoms()));
        for e in &g.edges {
            self.edge_src.push(atom0 + e.src);
            self.edge_dst.push(atom0 + e.dst);
        }
        for tr in &t.triplets {
            self.trip_recv.push(edge0 + tr.receiver);
            self.trip_send.push(edge0 + tr.sender);
        }
    }

    fn finish(self) -> GraphBatch {
        GraphBatch {
            n_atoms: self.positions.len(),
            n_mols: self.atoms_per_mol.len(),
            atomic_numbers: self.atomic_numbers,
            positions: self.positions,
            atoms_per_mol: self.atoms_per_mol,
            mol_of_atom: self.mol_of_atom.into(),
            edge_src: self.edge_src.into(),
            edge_dst: self.edge_dst.into(),
            trip_recv: self.trip_recv.into(),
            trip_send: self.trip_send.into(),
        }
    }
}
