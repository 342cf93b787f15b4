//! Initial invariant and equivariant features for atoms, bonds and triplets.
//!
//! The free functions evaluate single entities in plain `f64`. [`initialize`]
//! builds the same quantities for a whole batch on a tape, starting from the
//! atom positions so that forces flow back through distances and directions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch::GraphBatch;
use crate::geometry::{relative_direction, scale, Edge, Vec3};
use crate::linegraph::Triplet;
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeaturizeError {
    #[error("atomic number {z} outside embedding table of size {table}")]
    UnknownElement { z: u32, table: usize },
    #[error("invalid radial basis: {0}")]
    BadBasis(String),
}

/// Gaussian radial basis on an even grid `μ_m = m/(n_bf-1)·μ_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBasisConfig {
    pub n_bf: usize,
    pub mu_max: f64,
    pub sigma: f64,
    pub cutoff: f64,
}

impl RadialBasisConfig {
    /// Grid spanning `[0, cutoff]` with width equal to the center spacing.
    pub fn for_cutoff(n_bf: usize, cutoff: f64) -> Self {
        let spacing = cutoff / (n_bf.max(2) - 1) as f64;
        Self {
            n_bf,
            mu_max: cutoff,
            sigma: spacing,
            cutoff,
        }
    }

    pub fn validate(&self) -> Result<(), FeaturizeError> {
        if self.n_bf < 2 {
            return Err(FeaturizeError::BadBasis(format!("n_bf = {} < 2", self.n_bf)));
        }
        if !(self.sigma > 0.0) || !(self.cutoff > 0.0) || !(self.mu_max >= 0.0) {
            return Err(FeaturizeError::BadBasis(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bf)
            .map(|m| m as f64 / (self.n_bf - 1) as f64 * self.mu_max)
            .collect()
    }
}

pub fn cosine_cutoff(x: f64, cutoff: f64) -> f64 {
    if x <= cutoff {
        0.5 * (1.0 + (std::f64::consts::PI * x / cutoff).cos())
    } else {
        0.0
    }
}

pub fn gaussian_expand(dist: f64, cfg: &RadialBasisConfig) -> Vec<f64> {
    let w = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    cfg.centers()
        .into_iter()
        .map(|mu| (-(dist - mu).powi(2) * w).exp())
        .collect()
}

fn check_z(z: u32, table: usize) -> Result<usize, FeaturizeError> {
    if z == 0 || z as usize > table {
        return Err(FeaturizeError::UnknownElement { z, table });
    }
    Ok(z as usize - 1)
}

/// Node features: row `Z` of the embedding table (1-based) and a zero vector
/// block of the same width.
pub fn init_node(z: u32, table: &Tensor<f64>) -> Result<(Vec<f64>, Vec<Vec3>), FeaturizeError> {
    let (rows, d) = (table.shape()[0], table.shape()[1]);
    let r = check_z(z, rows)?;
    Ok((table.data()[r * d..(r + 1) * d].to_vec(), vec![[0.0; 3]; d]))
}

/// Expansion of `dist` projected by `proj` (`[n_bf, width]`), scaled by the
/// cutoff envelope, with the unit direction scaled the same way in every
/// channel.
fn init_pair(dist: f64, dir: Vec3, cfg: &RadialBasisConfig, proj: &Tensor<f64>) -> (Vec<f64>, Vec<Vec3>) {
    let width = proj.shape()[1];
    let fc = cosine_cutoff(dist, cfg.cutoff);
    let basis = gaussian_expand(dist, cfg);
    let scalars = (0..width)
        .map(|c| {
            let s: f64 = basis
                .iter()
                .enumerate()
                .map(|(m, b)| b * proj.data()[m * width + c])
                .sum();
            s * fc
        })
        .collect();
    (scalars, vec![scale(dir, fc); width])
}

pub fn init_edge(edge: &Edge, cfg: &RadialBasisConfig, w_e: &Tensor<f64>) -> (Vec<f64>, Vec<Vec3>) {
    init_pair(edge.dist, relative_direction(edge), cfg, w_e)
}

/// `cfg` here is the triplet basis, whose cutoff is twice the bond cutoff.
pub fn init_triplet(t: &Triplet, cfg: &RadialBasisConfig, w_t: &Tensor<f64>) -> (Vec<f64>, Vec<Vec3>) {
    init_pair(t.dist, scale(t.rel_vec, 1.0 / t.dist), cfg, w_t)
}

/// Scalar and vector features of one kind of entity, as tape variables.
#[derive(Clone, Copy, Debug)]
pub struct Features {
    /// `[n, width]`
    pub s: Var,
    /// `[n, width, 3]`
    pub v: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FeatureState {
    pub nodes: Features,
    pub edges: Features,
    pub triplets: Features,
}

/// Parameters consumed by [`initialize`].
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingVars {
    /// `[z_max, d]`
    pub w_z: Var,
    /// `[n_bf, d]`
    pub w_e: Var,
    /// `[n_bf, d_t]`
    pub w_t: Var,
}

fn pair_features<T: Real>(
    tape: &mut Tape<T>,
    rel: Var,
    cfg: &RadialBasisConfig,
    proj: Var,
) -> Result<Features, TensorError> {
    let width = tape.shape(proj)[1];
    let dist = tape.channel_norm(rel)?;
    let inv = tape.recip(dist);
    let dir = tape.mul(rel, inv)?;
    let fc = tape.cosine_cutoff(dist, cfg.cutoff);
    let centers: Arc<[f64]> = cfg.centers().into();
    let basis = tape.rbf(dist, &centers, cfg.sigma)?;
    let s = tape.linear(basis, proj, None)?;
    let s = tape.mul(s, fc)?;
    let v = tape.mul(dir, fc)?;
    let v = tape.repeat_channels(v, width)?;
    Ok(Features { s, v })
}

/// Initial features for a batch, differentiable with respect to `positions`
/// (`[n_atoms, 3]`) and the embedding parameters.
pub fn initialize<T: Real>(
    tape: &mut Tape<T>,
    batch: &GraphBatch,
    positions: Var,
    emb: EmbeddingVars,
    edge_basis: &RadialBasisConfig,
    triplet_basis: &RadialBasisConfig,
) -> Result<FeatureState, crate::Error> {
    let (z_max, d) = {
        let s = tape.shape(emb.w_z);
        (s[0], s[1])
    };
    let rows: Vec<usize> = batch
        .atomic_numbers
        .iter()
        .map(|&z| check_z(z, z_max))
        .collect::<Result<_, _>>()?;
    let rows: Arc<[usize]> = rows.into();
    let h = tape.gather(emb.w_z, &rows)?;
    let hv = tape.constant(Tensor::zeros(&[batch.n_atoms, d, 3]));

    let ri = tape.gather(positions, &batch.edge_dst)?;
    let rj = tape.gather(positions, &batch.edge_src)?;
    let rel = tape.sub(ri, rj)?;
    let edges = pair_features(tape, rel, edge_basis, emb.w_e)?;

    // r_j - r_k = rel(k -> i) - rel(j -> i)
    let ra = tape.gather(rel, &batch.trip_recv)?;
    let rb = tape.gather(rel, &batch.trip_send)?;
    let rkj = tape.sub(rb, ra)?;
    let triplets = pair_features(tape, rkj, triplet_basis, emb.w_t)?;

    Ok(FeatureState {
        nodes: Features { s: h, v: hv },
        edges,
        triplets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_values() {
        assert_eq!(cosine_cutoff(0.0, 5.0), 1.0);
        assert!(cosine_cutoff(5.0, 5.0).abs() < 1e-16);
        assert!((cosine_cutoff(2.5, 5.0) - 0.5).abs() < 1e-15);
        assert_eq!(cosine_cutoff(5.1, 5.0), 0.0);
    }

    #[test]
    fn gaussian_at_center_and_one_sigma() {
        let cfg = RadialBasisConfig::for_cutoff(6, 5.0);
        let c = cfg.centers();
        assert_eq!(c, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(cfg.sigma, 1.0);
        let g = gaussian_expand(2.0, &cfg);
        assert_eq!(g[2], 1.0);
        assert!((g[3] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g[1] - 0.6065306597126334).abs() < 1e-15);
        assert!(g.iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn basis_validation() {
        assert!(RadialBasisConfig::for_cutoff(1, 5.0).validate().is_err());
        let mut cfg = RadialBasisConfig::for_cutoff(4, 5.0);
        cfg.sigma = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn node_lookup() {
        let table = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let (h, hv) = init_node(2, &table).unwrap();
        assert_eq!(h, vec![3., 4.]);
        assert_eq!(hv, vec![[0.0; 3]; 2]);
        assert_eq!(init_node(2, &table).unwrap().0, h);
        assert_eq!(
            init_node(4, &table),
            Err(FeaturizeError::UnknownElement { z: 4, table: 3 })
        );
        assert!(init_node(0, &table).is_err());
    }

    #[test]
    fn edge_at_cutoff_vanishes() {
        let cfg = RadialBasisConfig::for_cutoff(5, 5.0);
        let w = Tensor::full(&[5, 3], 1.0);
        let e = Edge {
            src: 0,
            dst: 1,
            rel_vec: [5.0, 0.0, 0.0],
            dist: 5.0,
        };
        let (s, v) = init_edge(&e, &cfg, &w);
        assert!(s.iter().all(|x| x.abs() < 1e-15));
        assert!(v.iter().flatten().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn edge_hand_computed() {
        // three centers 0, 2.5, 5 with sigma 2.5; identity projection
        let cfg = RadialBasisConfig::for_cutoff(3, 5.0);
        let w = Tensor::eye(3);
        let e = Edge {
            src: 0,
            dst: 1,
            rel_vec: [0.0, 1.0, 0.0],
            dist: 1.0,
        };
        let (s, v) = init_edge(&e, &cfg, &w);
        let fc = 0.5 * (1.0 + (std::f64::consts::PI / 5.0).cos());
        let want = [
            (-1.0f64 / 12.5).exp() * fc,
            (-2.25f64 / 12.5).exp() * fc,
            (-16.0f64 / 12.5).exp() * fc,
        ];
        for (a, b) in s.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(v, vec![[0.0, fc, 0.0]; 3]);
    }

    #[test]
    fn triplet_geometry() {
        let cfg = RadialBasisConfig::for_cutoff(4, 10.0);
        let w = Tensor::full(&[4, 2], 0.5);
        // collinear j - i - k with unit bonds
        let t = Triplet {
            receiver: 0,
            sender: 1,
            center: 0,
            rel_vec: [2.0, 0.0, 0.0],
            dist: 2.0,
        };
        let (_, v) = init_triplet(&t, &cfg, &w);
        let fc = cosine_cutoff(2.0, 10.0);
        assert_eq!(v, vec![[fc, 0.0, 0.0]; 2]);
    }
}
