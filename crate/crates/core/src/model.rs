//! Full network: embedding, interaction blocks, readout and property heads.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::featurize::{initialize, EmbeddingVars, FeatureState, Features, RadialBasisConfig};
use crate::geometry::{Mat3, Molecule, Vec3};
use crate::layers::{EdgeVectorSource, GatedReadout, Incidence, MixingLayer, SimpleMixingLayer, UpdatingLayer};
use crate::params::{Init, ModelParams, ParamId, ParamRegistry};
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Extensive targets such as energy.
    #[default]
    Sum,
    /// Intensive targets.
    Mean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Scalar,
    #[default]
    ScalarForce,
    Polarizability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub d_t: usize,
    pub n_blocks: usize,
    pub cutoff: f64,
    pub n_max: usize,
    pub n_bf: usize,
    /// Largest Gaussian center; defaults to the cutoff.
    pub mu_max: Option<f64>,
    /// Gaussian width; defaults to the center spacing.
    pub sigma: Option<f64>,
    pub z_max: usize,
    pub pooling: Pooling,
    pub head: Head,
    pub residual: bool,
    pub edge_vector_source: EdgeVectorSource,
    /// Run the line-graph stage of every block.
    pub triplets: bool,
    /// Add summed final bond features to atoms before readout.
    pub readout_edges: bool,
    /// Measure polarizability dyads from the centroid.
    pub center_polarizability: bool,
    /// Target de-standardization: `scale·pooled + shift·(N or 1)`.
    pub target_scale: f64,
    pub target_shift: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 128,
            d_t: 2,
            n_blocks: 3,
            cutoff: 5.0,
            n_max: 32,
            n_bf: 20,
            mu_max: None,
            sigma: None,
            z_max: 100,
            pooling: Pooling::Sum,
            head: Head::ScalarForce,
            residual: true,
            edge_vector_source: EdgeVectorSource::Source,
            triplets: true,
            readout_edges: false,
            center_polarizability: true,
            target_scale: 1.0,
            target_shift: 0.0,
        }
    }
}

impl ModelConfig {
    /// Small widths for tests and demonstrations.
    pub fn small() -> Self {
        Self {
            d: 16,
            d_t: 2,
            n_blocks: 2,
            n_bf: 12,
            ..Self::default()
        }
    }

    pub fn edge_basis(&self) -> RadialBasisConfig {
        let mu_max = self.mu_max.unwrap_or(self.cutoff);
        RadialBasisConfig {
            n_bf: self.n_bf,
            mu_max,
            sigma: self
                .sigma
                .unwrap_or(mu_max / (self.n_bf.max(2) - 1) as f64),
            cutoff: self.cutoff,
        }
    }

    /// Same grid stretched to twice the bond cutoff.
    pub fn triplet_basis(&self) -> RadialBasisConfig {
        let e = self.edge_basis();
        RadialBasisConfig {
            n_bf: e.n_bf,
            mu_max: 2.0 * e.mu_max,
            sigma: 2.0 * e.sigma,
            cutoff: 2.0 * e.cutoff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d == 0 || self.d_t == 0 {
            return bad("channel widths must be positive");
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be at least 1");
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return bad("cutoff must be positive");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        if self.z_max == 0 {
            return bad("z_max must be at least 1");
        }
        if !self.target_scale.is_finite() || !self.target_shift.is_finite() {
            return bad("target scale/shift must be finite");
        }
        self.edge_basis().validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct LineStage {
    update: UpdatingLayer,
    mix: SimpleMixingLayer,
}

#[derive(Clone, Debug)]
struct Block {
    line: Option<LineStage>,
    update: UpdatingLayer,
    mix: MixingLayer,
}

/// Deliberate symmetry breakers for negative controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mutation {
    /// Adds a fixed vector to every node vector channel after each mixing
    /// layer, i.e. a bias on the vector path.
    VectorBias(Vec3),
}

#[derive(Clone, Debug)]
pub struct Eninet {
    pub config: ModelConfig,
    registry: ParamRegistry,
    w_z: ParamId,
    w_e: ParamId,
    w_t: ParamId,
    blocks: Vec<Block>,
    readout: GatedReadout,
    mutation: Option<Mutation>,
}

/// Tape variables produced by one forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub positions: Var,
    /// Per-atom readout, `[N, 1]` and `[N, 1, 3]`.
    pub node: Features,
    /// `[M]` after pooling and de-standardization.
    pub scalar: Var,
    /// `[M, 3]`
    pub vector: Var,
    /// `[M, 3, 3]` when the polarizability head is active.
    pub polarizability: Option<Var>,
    /// Per-block atom aggregates of the bond updating layer.
    pub aggregates: Vec<Features>,
}

/// Plain-number results for one molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub scalar: f64,
    pub vector: Vec3,
    pub forces: Option<Vec<Vec3>>,
    pub polarizability: Option<Mat3>,
}

impl Eninet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, dt) = (config.d, config.d_t);
        let mut reg = ParamRegistry::default();
        let w_z = reg.add("embed.w_z", &[config.z_max, d], Init::Normal(1.0));
        let w_e = reg.add(
            "embed.w_e",
            &[config.n_bf, d],
            Init::Scaled {
                fan_in: config.n_bf,
                gain: 1.0,
            },
        );
        let w_t = reg.add(
            "embed.w_t",
            &[config.n_bf, dt],
            Init::Scaled {
                fan_in: config.n_bf,
                gain: 1.0,
            },
        );
        let src = config.edge_vector_source;
        let blocks = (0..config.n_blocks)
            .map(|l| Block {
                line: config.triplets.then(|| LineStage {
                    update: UpdatingLayer::new(&mut reg, &format!("block{l}.line.update"), d, dt, src),
                    mix: SimpleMixingLayer::new(&mut reg, &format!("block{l}.line.mix"), d),
                }),
                update: UpdatingLayer::new(&mut reg, &format!("block{l}.bond.update"), d, d, src),
                mix: MixingLayer::new(&mut reg, &format!("block{l}.bond.mix"), d),
            })
            .collect();
        let readout = GatedReadout::new(&mut reg, "readout", d, 1, 1);
        Ok(Self {
            config,
            registry: reg,
            w_z,
            w_e,
            w_t,
            blocks,
            readout,
            mutation: None,
        })
    }

    pub fn with_mutation(mut self, m: Mutation) -> Self {
        self.mutation = Some(m);
        self
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn init_params(&self, seed: u64) -> Result<ModelParams> {
        self.registry.initialize(seed)
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        params.check_layout(&self.registry)?;
        if !params.all_finite() {
            return Err(Error::Params("non-finite parameter values".into()));
        }
        Ok(())
    }

    pub fn batch(&self, mols: &[&Molecule]) -> Result<GraphBatch> {
        GraphBatch::new(mols, self.config.cutoff, self.config.n_max)
    }

    /// Records the forward pass of `batch` on `tape`. `p` are the bound
    /// parameters; positions become a leaf that requires a gradient when
    /// `position_grad` is set.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        batch: &GraphBatch,
        positions: Tensor<T>,
        position_grad: bool,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let positions = tape.leaf(positions, position_grad);
        let emb = EmbeddingVars {
            w_z: p[self.w_z.0],
            w_e: p[self.w_e.0],
            w_t: p[self.w_t.0],
        };
        let FeatureState {
            mut nodes,
            mut edges,
            mut triplets,
        } = initialize(tape, batch, positions, emb, &cfg.edge_basis(), &cfg.triplet_basis())?;

        let bonds = Incidence {
            src: &batch.edge_src,
            dst: &batch.edge_dst,
            n_nodes: batch.n_atoms,
        };
        let line = Incidence {
            src: &batch.trip_send,
            dst: &batch.trip_recv,
            n_nodes: batch.n_edges(),
        };
        let mut aggregates = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            if let Some(stage) = &block.line {
                let up = stage.update.apply(tape, p, edges, triplets, &line)?;
                let mixed = stage.mix.apply(tape, p, up.aggregate)?;
                edges = self.residual(tape, edges, mixed)?;
                triplets = up.edges;
            }
            let up = block.update.apply(tape, p, nodes, edges, &bonds)?;
            aggregates.push(up.aggregate);
            let mut mixed = block.mix.apply(tape, p, up.aggregate)?;
            if let Some(Mutation::VectorBias(b)) = self.mutation {
                let n = tape.shape(mixed.v).to_vec();
                let data: Vec<T> = (0..n.iter().product::<usize>())
                    .map(|i| T::from_f64(b[i % 3]))
                    .collect();
                let bias = tape.constant(Tensor::new(n, data)?);
                mixed.v = tape.add(mixed.v, bias)?;
            }
            nodes = self.residual(tape, nodes, mixed)?;
            edges = up.edges;
        }

        if cfg.readout_edges {
            let es = tape.scatter_add(edges.s, &batch.edge_dst, batch.n_atoms)?;
            let ev = tape.scatter_add(edges.v, &batch.edge_dst, batch.n_atoms)?;
            nodes = Features {
                s: tape.add(nodes.s, es)?,
                v: tape.add(nodes.v, ev)?,
            };
        }
        let out = self.readout.apply(tape, p, nodes)?;

        let (m, n) = (batch.n_mols, batch.n_atoms);
        let pooled_s = tape.scatter_add(out.s, &batch.mol_of_atom, m)?;
        let pooled_s = tape.reshape(pooled_s, vec![m])?;
        let pooled_v = tape.scatter_add(out.v, &batch.mol_of_atom, m)?;
        let pooled_v = tape.reshape(pooled_v, vec![m, 3])?;
        let (scalar, vector) = match cfg.pooling {
            Pooling::Sum => (pooled_s, pooled_v),
            Pooling::Mean => {
                let inv: Vec<T> = batch
                    .atoms_per_mol
                    .iter()
                    .map(|&k| T::from_f64(1.0 / k as f64))
                    .collect();
                let inv = tape.constant(Tensor::new(vec![m], inv)?);
                (tape.mul(pooled_s, inv)?, tape.mul(pooled_v, inv)?)
            }
        };
        let scalar = tape.scale(scalar, cfg.target_scale);
        let scalar = if cfg.target_shift != 0.0 {
            let count: Vec<T> = batch
                .atoms_per_mol
                .iter()
                .map(|&k| {
                    T::from_f64(match cfg.pooling {
                        Pooling::Sum => cfg.target_shift * k as f64,
                        Pooling::Mean => cfg.target_shift,
                    })
                })
                .collect();
            let c = tape.constant(Tensor::new(vec![m], count)?);
            tape.add(scalar, c)?
        } else {
            scalar
        };

        let polarizability = if cfg.head == Head::Polarizability {
            let h = tape.reshape(out.s, vec![n])?;
            let hv = tape.reshape(out.v, vec![n, 3])?;
            let r = if cfg.center_polarizability {
                let sum = tape.scatter_add(positions, &batch.mol_of_atom, m)?;
                let inv: Vec<T> = batch
                    .atoms_per_mol
                    .iter()
                    .map(|&k| T::from_f64(1.0 / k as f64))
                    .collect();
                let inv = tape.constant(Tensor::new(vec![m], inv)?);
                let centroid = tape.mul(sum, inv)?;
                let c = tape.gather(centroid, &batch.mol_of_atom)?;
                tape.sub(positions, c)?
            } else {
                positions
            };
            let eye: Vec<T> = (0..n)
                .flat_map(|_| (0..9).map(|k| if k % 4 == 0 { T::one() } else { T::zero() }))
                .collect();
            let eye = tape.constant(Tensor::new(vec![n, 3, 3], eye)?);
            let iso = tape.mul(eye, h)?;
            let hr = tape.outer3(hv, r)?;
            let rh = tape.outer3(r, hv)?;
            let dy = tape.add(hr, rh)?;
            let per_atom = tape.add(iso, dy)?;
            Some(tape.scatter_add(per_atom, &batch.mol_of_atom, m)?)
        } else {
            None
        };

        Ok(ForwardOutput {
            positions,
            node: out,
            scalar,
            vector,
            polarizability,
            aggregates,
        })
    }

    fn residual<T: Real>(&self, tape: &mut Tape<T>, old: Features, new: Features) -> Result<Features> {
        if !self.config.residual {
            return Ok(new);
        }
        Ok(Features {
            s: tape.add(old.s, new.s)?,
            v: tape.add(old.v, new.v)?,
        })
    }

    /// Scalar, pooled vector, and (per head) forces or polarizability for
    /// each molecule.
    pub fn predict(&self, params: &ModelParams, mols: &[&Molecule]) -> Result<Vec<Prediction>> {
        self.check_params(params)?;
        let batch = self.batch(mols)?;
        self.predict_batch(params, &batch)
    }

    pub fn predict_batch(&self, params: &ModelParams, batch: &GraphBatch) -> Result<Vec<Prediction>> {
        let forces = self.config.head == Head::ScalarForce;
        let mut tape = Tape::<f64>::new();
        let p = params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &p, batch, positions_tensor(batch), forces)?;
        let scalars = tape.value(out.scalar).data().to_vec();
        let vectors = tape.value(out.vector).data().to_vec();
        let alpha = out.polarizability.map(|a| tape.value(a).data().to_vec());
        let grad = if forces {
            let root = tape.sum_all(out.scalar);
            let g = tape.backward(root)?;
            Some(g.get_or_zeros(out.positions, &[batch.n_atoms, 3]).into_data())
        } else {
            None
        };
        let mut preds = Vec::with_capacity(batch.n_mols);
        let mut atom0 = 0;
        for (k, &na) in batch.atoms_per_mol.iter().enumerate() {
            preds.push(Prediction {
                scalar: scalars[k],
                vector: [vectors[3 * k], vectors[3 * k + 1], vectors[3 * k + 2]],
                forces: grad.as_ref().map(|g| {
                    (atom0..atom0 + na)
                        .map(|i| [-g[3 * i], -g[3 * i + 1], -g[3 * i + 2]])
                        .collect()
                }),
                polarizability: alpha.as_ref().map(|a| {
                    let s = &a[9 * k..9 * k + 9];
                    [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]]
                }),
            });
            atom0 += na;
        }
        Ok(preds)
    }

    /// Energy and forces `F = -∂E/∂r` for one molecule.
    pub fn energy_and_forces(&self, params: &ModelParams, mol: &Molecule) -> Result<(f64, Vec<Vec3>)> {
        let batch = self.batch(&[mol])?;
        let mut tape = Tape::<f64>::new();
        let p = params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &p, &batch, positions_tensor(&batch), true)?;
        let e = tape.value(out.scalar).data()[0];
        let root = tape.sum_all(out.scalar);
        let g = tape.backward(root)?;
        let g = g.get_or_zeros(out.positions, &[batch.n_atoms, 3]);
        let forces = g
            .data()
            .chunks(3)
            .map(|c| [-c[0], -c[1], -c[2]])
            .collect();
        Ok((e, forces))
    }

    /// Scalar output only, without building any gradient.
    pub fn energy(&self, params: &ModelParams, mol: &Molecule) -> Result<f64> {
        let batch = self.batch(&[mol])?;
        let mut tape = Tape::<f64>::new();
        let p = params.bind(&mut tape, false);
        let out = self.forward(&mut tape, &p, &batch, positions_tensor(&batch), false)?;
        Ok(tape.value(out.scalar).data()[0])
    }

    pub fn polarizability(&self, params: &ModelParams, mol: &Molecule) -> Result<Mat3> {
        if self.config.head != Head::Polarizability {
            return Err(Error::Config("model head is not polarizability".into()));
        }
        let p = self.predict(params, &[mol])?;
        Ok(p[0].polarizability.expect("polarizability head"))
    }
}

pub fn positions_tensor<T: Real>(batch: &GraphBatch) -> Tensor<T> {
    let data = batch
        .positions
        .iter()
        .flat_map(|r| r.iter().map(|&x| T::from_f64(x)))
        .collect();
    Tensor::new(vec![batch.n_atoms, 3], data).expect("n x 3")
}

/// Isotropic and anisotropic parts `(λ0, λ2)` of a symmetric 3×3 tensor.
pub fn decompose_polarizability(a: &Mat3) -> Result<(f64, [f64; 5])> {
    let mut asym: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            asym = asym.max((a[i][j] - a[j][i]).abs());
        }
    }
    if asym > 1e-8 {
        return Err(Error::Asymmetric(asym));
    }
    let s2 = 2.0f64.sqrt();
    let s3 = 3.0f64.sqrt();
    let l0 = (a[0][0] + a[1][1] + a[2][2]) / s3;
    let l2 = [
        s2 * a[0][1],
        s2 * a[1][2],
        s2 * a[0][2],
        s2 * (2.0 * a[2][2] - a[0][0] - a[1][1]) / (2.0 * s3),
        s2 * (a[0][0] - a[1][1]) / 2.0,
    ];
    Ok((l0, l2))
}

const MAGIC: &[u8; 4] = b"ENIN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Serializes a configuration and its parameters.
pub fn encode_checkpoint(config: &ModelConfig, params: &ModelParams) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let tensors = params
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                dtype: "f64".into(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 8 * t.numel() as u64;
            e
        })
        .collect();
    let meta = serde_json::to_vec(&CheckpointMeta {
        config: config.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(16 + meta.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for (_, t) in params.iter() {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, ModelParams)> {
    let corrupt = |m: &str| Error::CorruptCheckpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("missing header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let meta_end = usize::try_from(meta_len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("metadata length exceeds file"))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes[16..meta_end]).map_err(|e| corrupt(&format!("metadata: {e}")))?;
    let payload = &bytes[meta_end..];
    let mut params = ModelParams::default();
    let mut expected = 0u64;
    for t in meta.tensors {
        if t.dtype != "f64" {
            return Err(corrupt(&format!("unsupported dtype {}", t.dtype)));
        }
        if t.offset != expected {
            return Err(corrupt(&format!("tensor {} at unexpected offset", t.name)));
        }
        let n: usize = t.shape.iter().product();
        let start = t.offset as usize;
        let end = start + 8 * n;
        if end > payload.len() {
            return Err(corrupt(&format!("payload truncated in tensor {}", t.name)));
        }
        let data = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(t.name, Tensor::new(t.shape, data)?)?;
        expected = end as u64;
    }
    if expected as usize != payload.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok((meta.config, params))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    let bytes = encode_checkpoint(config, params)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    decode_checkpoint(&std::fs::read(path)?)
}

/// Loads parameters and checks them against the layout of `model`.
pub fn load_checkpoint_into(path: &Path, model: &Eninet) -> Result<ModelParams> {
    let (_, params) = load_checkpoint(path)?;
    model.check_params(&params)?;
    Ok(params)
}

/// Rebuilds the model described by a checkpoint.
pub fn load_model(path: &Path) -> Result<(Eninet, ModelParams)> {
    let (config, params) = load_checkpoint(path)?;
    let model = Eninet::new(config)?;
    model.check_params(&params)?;
    Ok((model, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_trivial_cases() {
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (l0, l2) = decompose_polarizability(&eye).unwrap();
        assert!((l0 - 3.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(l2, [0.0; 5]);
        let a = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]];
        let (l0, l2) = decompose_polarizability(&a).unwrap();
        assert_eq!(l0, 0.0);
        assert_eq!(l2[..4], [0.0; 4]);
        assert!((l2[4] - 2.0f64.sqrt()).abs() < 1e-15);
        let bad = [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(matches!(decompose_polarizability(&bad), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn single_atom_has_zero_vector_output() {
        let model = Eninet::new(ModelConfig::small()).unwrap();
        let params = model.init_params(0).unwrap();
        let mol = Molecule::new(vec![6], vec![[0.3, -0.2, 1.0]]).unwrap();
        let p = model.predict(&params, &[&mol]).unwrap();
        assert_eq!(p[0].vector, [0.0; 3]);
        assert_eq!(p[0].forces.as_ref().unwrap(), &vec![[0.0; 3]]);
        assert!(p[0].scalar.is_finite());
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::small();
        c.n_blocks = 0;
        assert!(Eninet::new(c).is_err());
        let c: std::result::Result<ModelConfig, _> = serde_json::from_str(r#"{"d": 8, "bogus": 1}"#);
        assert!(c.is_err());
        let c: ModelConfig = serde_json::from_str(r#"{"d": 8}"#).unwrap();
        assert_eq!(c.d, 8);
        assert_eq!(c.n_blocks, 3);
    }

    #[test]
    fn checkpoint_bytes_round_trip() {
        let cfg = ModelConfig::small();
        let model = Eninet::new(cfg.clone()).unwrap();
        let params = model.init_params(11).unwrap();
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let (c2, p2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(p2, params);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            decode_checkpoint(&v),
            Err(Error::CheckpointVersion { found: 9, .. })
        ));
    }
}
