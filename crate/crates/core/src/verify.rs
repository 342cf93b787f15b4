//! Executable symmetry and representability checks: random orthogonal
//! matrices, equivariance certification, finite-difference force checks,
//! the angle-blindness fixtures, and a brute-force line-graph oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{conjugate, dot, mat_mul, mat_vec, norm, scale, sub, transpose, Mat3, MolecularGraph, Molecule, Vec3};
use crate::linegraph::{lift, LineGraphLevel, SimpleGraph};
use crate::model::{Eninet, ModelConfig, Prediction};
use crate::params::ModelParams;
use crate::tensor::Tape;
use crate::batch::GraphBatch;
use crate::model::positions_tensor;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Rotation,
    Reflection,
    /// Alternates rotation, reflection, rotation, …
    Mixed,
}

/// Haar-distributed orthogonal matrices from the QR factorization of a
/// Gaussian matrix, with determinant fixed by `mode`.
pub struct OrthogonalSampler {
    rng: ChaCha8Rng,
    mode: SampleMode,
    count: usize,
}

pub const REFLECT_Z: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// `‖QᵀQ − I‖` (Frobenius).
pub fn orthogonality_error(q: &Mat3) -> f64 {
    let p = mat_mul(&transpose(q), q);
    let mut s = 0.0;
    for (i, row) in p.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            let d = x - if i == j { 1.0 } else { 0.0 };
            s += d * d;
        }
    }
    s.sqrt()
}

impl OrthogonalSampler {
    pub fn new(seed: u64, mode: SampleMode) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
            count: 0,
        }
    }

    pub fn sample(&mut self) -> Mat3 {
        let q = loop {
            let cols: [Vec3; 3] = std::array::from_fn(|_| std::array::from_fn(|_| StandardNormal.sample(&mut self.rng)));
            if let Some(q) = gram_schmidt(cols) {
                break q;
            }
        };
        let want_reflection = match self.mode {
            SampleMode::Rotation => false,
            SampleMode::Reflection => true,
            SampleMode::Mixed => self.count % 2 == 1,
        };
        self.count += 1;
        if (det3(&q) < 0.0) != want_reflection {
            mat_mul(&q, &REFLECT_Z)
        } else {
            q
        }
    }
}

/// Columns orthonormalized in order; equivalent to QR with a positive
/// diagonal in R. Each column is projected twice so that nearly dependent
/// draws still come out orthogonal to rounding.
fn gram_schmidt(cols: [Vec3; 3]) -> Option<Mat3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(3);
    for c in cols {
        let mut v = c;
        for _ in 0..2 {
            for u in &out {
                v = sub(v, scale(*u, dot(v, *u)));
            }
        }
        let n = norm(v);
        if n < 1e-8 {
            return None;
        }
        out.push(scale(v, 1.0 / n));
    }
    let mut q = [[0.0; 3]; 3];
    for (j, u) in out.iter().enumerate() {
        for i in 0..3 {
            q[i][j] = u[i];
        }
    }
    Some(q)
}

pub fn random_vector(rng: &mut impl Rng, scale_: f64) -> Vec3 {
    std::array::from_fn(|_| scale_ * rng.random_range(-1.0..1.0))
}

/// Compact molecule with every pair inside `radius·2` and no two atoms
/// closer than `min_sep`.
pub fn random_molecule(rng: &mut impl Rng, n_atoms: usize, radius: f64, min_sep: f64, elements: &[u32]) -> Molecule {
    let mut pos: Vec<Vec3> = Vec::with_capacity(n_atoms);
    while pos.len() < n_atoms {
        let p = random_vector(rng, radius);
        if norm(p) > radius {
            continue;
        }
        if pos.iter().all(|q| norm(sub(p, *q)) >= min_sep) {
            pos.push(p);
        }
    }
    let z = (0..n_atoms).map(|_| elements[rng.random_range(0..elements.len())]).collect();
    Molecule::new(z, pos).expect("valid random molecule")
}

/// Default random molecules for property suites: 3–20 atoms of H, C, N, O
/// inside a 2.4 Å ball, so every pair is within the 5 Å cutoff.
pub fn random_molecules(seed: u64, count: usize, min_atoms: usize, max_atoms: usize) -> Vec<Molecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(min_atoms..=max_atoms);
            random_molecule(&mut rng, n, 2.4, 0.8, &[1, 6, 7, 8])
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fixtures

/// Named geometry with explicit bonds, atom 0 always the center.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub molecule: Molecule,
    pub bonds: Vec<(usize, usize)>,
}

impl Fixture {
    pub fn graph(&self, cutoff: f64) -> Result<MolecularGraph> {
        Ok(MolecularGraph::from_bonds(&self.molecule, &self.bonds, cutoff)?)
    }
}

pub const FIXTURE_NAMES: [&str; 4] = ["fig1a_collinear_90", "fig1a_collinear_60", "fig1b_trigonal", "path4_dihedral"];

/// Atoms `i, j, k, m`: unit bonds, `j` and `k` opposite, `θ_jim` as given.
fn collinear(name: &'static str, theta_deg: f64) -> Fixture {
    let t = theta_deg.to_radians();
    let j = [t.cos(), t.sin(), 0.0];
    let k = [-j[0], -j[1], -j[2]];
    Fixture {
        name,
        molecule: Molecule::new(vec![6; 4], vec![[0.0; 3], j, k, [1.0, 0.0, 0.0]]).expect("fixture"),
        bonds: vec![(0, 1), (0, 2), (0, 3)],
    }
}

pub fn fixture(name: &str) -> Option<Fixture> {
    let s3 = 3.0f64.sqrt() / 2.0;
    Some(match name {
        "fig1a_collinear_90" => collinear("fig1a_collinear_90", 90.0),
        "fig1a_collinear_60" => collinear("fig1a_collinear_60", 60.0),
        // i, j, k, l in the xy plane at 120°, m tilted out of it
        "fig1b_trigonal" => Fixture {
            name: "fig1b_trigonal",
            molecule: Molecule::new(
                vec![6; 5],
                vec![[0.0; 3], [1.0, 0.0, 0.0], [-0.5, s3, 0.0], [-0.5, -s3, 0.0], [0.6, 0.0, 0.8]],
            )
            .expect("fixture"),
            bonds: vec![(0, 1), (0, 2), (0, 3), (0, 4)],
        },
        "path4_dihedral" => Fixture {
            name: "path4_dihedral",
            molecule: Molecule::new(
                vec![6; 4],
                vec![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]],
            )
            .expect("fixture"),
            bonds: vec![(0, 1), (1, 2), (2, 3)],
        },
        _ => return None,
    })
}

// ---------------------------------------------------------------------------
// Certification

/// How an output transforms under `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Trivial,
    Vector,
    Rank2,
}

/// Worst case over all trials of one check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub representation: Representation,
    pub evaluations: usize,
    pub max_deviation: f64,
    pub worst_trial: usize,
    pub worst_molecule: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &str, representation: Representation, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            representation,
            evaluations: 0,
            max_deviation: 0.0,
            worst_trial: 0,
            worst_molecule: 0,
            tolerance,
            passed: true,
        }
    }

    fn record(&mut self, dev: f64, trial: usize, mol: usize) {
        self.evaluations += 1;
        // NaN counts as a failure
        if !(dev <= self.max_deviation) {
            self.max_deviation = if dev.is_nan() { f64::INFINITY } else { dev };
            self.worst_trial = trial;
            self.worst_molecule = mol;
        }
        self.passed = self.max_deviation < self.tolerance;
    }

    pub fn line(&self) -> String {
        format!(
            "{:<28} {:<4} max_dev={:.3e} tol={:.0e} (trial {}, molecule {}, {} evals)",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_deviation,
            self.tolerance,
            self.worst_trial,
            self.worst_molecule,
            self.evaluations
        )
    }
}

/// Collection of checks with an overall verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

impl Certificate {
    fn new(checks: Vec<CheckReport>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { checks, passed }
    }

    pub fn report(&self) -> String {
        let mut s: String = self.checks.iter().map(|c| c.line() + "\n").collect();
        s.push_str(if self.passed { "verdict: PASS\n" } else { "verdict: FAIL\n" });
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// `‖a − b‖ / max(‖b‖, 1)`.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    diff / nb.max(1.0)
}

fn flat3(v: &[Vec3]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn flat33(a: &Mat3) -> Vec<f64> {
    a.iter().flatten().copied().collect()
}

/// Everything a model head can emit for one molecule.
pub type Evaluator<'a> = dyn Fn(&Molecule) -> Result<Prediction> + 'a;

fn checks_for(base: &Prediction, tol: f64, prefix: &str) -> Vec<CheckReport> {
    let mut c = vec![
        CheckReport::new(&format!("{prefix}scalar"), Representation::Trivial, tol),
        CheckReport::new(&format!("{prefix}vector"), Representation::Vector, tol),
    ];
    if base.forces.is_some() {
        c.push(CheckReport::new(&format!("{prefix}forces"), Representation::Vector, tol));
    }
    if base.polarizability.is_some() {
        c.push(CheckReport::new(&format!("{prefix}polarizability"), Representation::Rank2, tol));
    }
    c
}

/// Compares `got` against the expected `want` field by field, in the order
/// produced by [`checks_for`].
fn record_all(checks: &mut [CheckReport], got: &Prediction, want: &Prediction, trial: usize, mol: usize) {
    let mut k = 0;
    checks[k].record(relative_deviation(&[got.scalar], &[want.scalar]), trial, mol);
    k += 1;
    checks[k].record(relative_deviation(&got.vector, &want.vector), trial, mol);
    k += 1;
    if let (Some(g), Some(w)) = (&got.forces, &want.forces) {
        checks[k].record(relative_deviation(&flat3(g), &flat3(w)), trial, mol);
        k += 1;
    }
    if let (Some(g), Some(w)) = (&got.polarizability, &want.polarizability) {
        checks[k].record(relative_deviation(&flat33(g), &flat33(w)), trial, mol);
    }
}

/// `ρ(Q)` applied to every output.
fn transform_prediction(p: &Prediction, q: &Mat3) -> Prediction {
    Prediction {
        scalar: p.scalar,
        vector: mat_vec(q, p.vector),
        forces: p.forces.as_ref().map(|f| f.iter().map(|&v| mat_vec(q, v)).collect()),
        polarizability: p.polarizability.as_ref().map(|a| conjugate(q, a)),
    }
}

/// Checks `f(Q·x) = ρ(Q)·f(x)` for `n_q` sampled matrices on every molecule.
pub fn certify_equivariance(
    eval: &Evaluator<'_>,
    mols: &[Molecule],
    sampler: &mut OrthogonalSampler,
    n_q: usize,
    tol: f64,
) -> Result<Certificate> {
    let qs: Vec<Mat3> = (0..n_q).map(|_| sampler.sample()).collect();
    certify_with_matrices(eval, mols, &qs, tol)
}

pub fn certify_with_matrices(eval: &Evaluator<'_>, mols: &[Molecule], qs: &[Mat3], tol: f64) -> Result<Certificate> {
    let mut checks: Option<Vec<CheckReport>> = None;
    for (mi, mol) in mols.iter().enumerate() {
        let base = eval(mol)?;
        let checks = checks.get_or_insert_with(|| checks_for(&base, tol, ""));
        for (t, q) in qs.iter().enumerate() {
            let got = eval(&mol.transformed(q))?;
            record_all(checks, &got, &transform_prediction(&base, q), t, mi);
        }
    }
    Ok(Certificate::new(checks.unwrap_or_default()))
}

/// Random translations (outputs unchanged) and random atom relabelings
/// (pooled outputs unchanged, per-atom outputs permuted).
pub fn certify_invariance(eval: &Evaluator<'_>, mols: &[Molecule], seed: u64, trials: usize, tol: f64) -> Result<Certificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr: Option<Vec<CheckReport>> = None;
    let mut pm: Option<Vec<CheckReport>> = None;
    for (mi, mol) in mols.iter().enumerate() {
        let base = eval(mol)?;
        let tr = tr.get_or_insert_with(|| checks_for(&base, tol, "translation."));
        let pm = pm.get_or_insert_with(|| checks_for(&base, tol, "permutation."));
        for t in 0..trials {
            let shift = random_vector(&mut rng, 10.0);
            let got = eval(&mol.translated(shift))?;
            record_all(tr, &got, &base, t, mi);

            let mut perm: Vec<usize> = (0..mol.n_atoms()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let got = eval(&mol.permuted(&perm))?;
            let mut want = base.clone();
            want.forces = base.forces.as_ref().map(|f| perm.iter().map(|&p| f[p]).collect());
            record_all(pm, &got, &want, t, mi);
        }
    }
    let mut checks = tr.unwrap_or_default();
    checks.extend(pm.unwrap_or_default());
    Ok(Certificate::new(checks))
}

/// Model head as an [`Evaluator`].
pub fn model_evaluator<'a>(model: &'a Eninet, params: &'a ModelParams) -> impl Fn(&Molecule) -> Result<Prediction> + 'a {
    move |m: &Molecule| Ok(model.predict(params, &[m])?.remove(0))
}

// ---------------------------------------------------------------------------
// Finite differences

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForceCheck {
    /// `‖F − F_fd‖ / ‖F_fd‖`
    pub relative_error: f64,
    pub max_abs_error: f64,
    /// `‖Σ_i F_i‖`
    pub net_force: f64,
}

/// Analytic forces against central differences of the energy.
pub fn check_forces(model: &Eninet, params: &ModelParams, mol: &Molecule, step: f64) -> Result<ForceCheck> {
    let (_, f) = model.energy_and_forces(params, mol)?;
    let mut fd = vec![[0.0; 3]; mol.n_atoms()];
    for i in 0..mol.n_atoms() {
        for a in 0..3 {
            let mut p = mol.clone();
            p.positions[i][a] += step;
            let ep = model.energy(params, &p)?;
            p.positions[i][a] -= 2.0 * step;
            let em = model.energy(params, &p)?;
            fd[i][a] = -(ep - em) / (2.0 * step);
        }
    }
    let (a, b) = (flat3(&f), flat3(&fd));
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    let max_abs = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let net = f.iter().fold([0.0; 3], |s, v| [s[0] + v[0], s[1] + v[1], s[2] + v[2]]);
    Ok(ForceCheck {
        relative_error: if nb > 0.0 { diff / nb } else { diff },
        max_abs_error: max_abs,
        net_force: norm(net),
    })
}

// ---------------------------------------------------------------------------
// Angle blindness

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BondOnly,
    WithTriplets,
}

/// Aggregated node vector features of the first bond updating layer and the
/// pooled scalar, for a fixture evaluated on its explicit bonds.
pub struct FixtureOutputs {
    /// `[n_atoms][d]` channel vectors.
    pub aggregate: Vec<Vec<Vec3>>,
    pub pooled: f64,
}

pub fn evaluate_fixture(model: &Eninet, params: &ModelParams, fx: &Fixture) -> Result<FixtureOutputs> {
    let g = fx.graph(model.config.cutoff)?;
    let batch = GraphBatch::from_graphs(&[(&fx.molecule, &g)])?;
    let mut tape = Tape::<f64>::new();
    let p = params.bind(&mut tape, false);
    let out = model.forward(&mut tape, &p, &batch, positions_tensor(&batch), false)?;
    let d = model.config.d;
    let agg = tape.value(out.aggregates[0].v).data();
    let aggregate = (0..batch.n_atoms)
        .map(|i| (0..d).map(|c| std::array::from_fn(|s| agg[(i * d + c) * 3 + s])).collect())
        .collect();
    Ok(FixtureOutputs {
        aggregate,
        pooled: tape.value(out.scalar).data()[0],
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub variant: Variant,
    pub seeds: usize,
    /// Largest center-atom aggregate difference between the fig1a pair.
    pub max_aggregate_gap: f64,
    /// Largest pooled-scalar difference between the fig1a pair.
    pub max_pooled_gap: f64,
    /// Seeds whose pooled scalars differ by more than `separation_tol`.
    pub separated: usize,
    /// Largest component of the fig1b center aggregate orthogonal to `r_mi`.
    pub trigonal_offset: f64,
    pub separation_tol: f64,
}

impl SeparabilityReport {
    pub fn indistinguishable(&self, tol: f64) -> bool {
        self.max_aggregate_gap < tol && self.max_pooled_gap < tol && self.trigonal_offset < tol
    }
}

/// Model used for the separability experiment: one block, small widths,
/// optional line-graph stage.
pub fn separability_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d: 16,
        n_blocks: 1,
        n_bf: 12,
        triplets: variant == Variant::WithTriplets,
        ..ModelConfig::default()
    }
}

pub fn fig1_separability(variant: Variant, seeds: usize, separation_tol: f64) -> Result<SeparabilityReport> {
    let model = Eninet::new(separability_config(variant))?;
    let a = fixture("fig1a_collinear_90").expect("fixture");
    let b = fixture("fig1a_collinear_60").expect("fixture");
    let c = fixture("fig1b_trigonal").expect("fixture");
    let r_mi = {
        let m = &c.molecule.positions;
        let v = sub(m[0], m[4]);
        scale(v, 1.0 / norm(v))
    };
    let mut rep = SeparabilityReport {
        variant,
        seeds,
        max_aggregate_gap: 0.0,
        max_pooled_gap: 0.0,
        separated: 0,
        trigonal_offset: 0.0,
        separation_tol,
    };
    for seed in 0..seeds as u64 {
        let params = model.init_params(seed)?;
        let oa = evaluate_fixture(&model, &params, &a)?;
        let ob = evaluate_fixture(&model, &params, &b)?;
        let gap = oa.aggregate[0]
            .iter()
            .zip(&ob.aggregate[0])
            .map(|(x, y)| norm(sub(*x, *y)))
            .fold(0.0, f64::max);
        rep.max_aggregate_gap = rep.max_aggregate_gap.max(gap);
        let pooled = (oa.pooled - ob.pooled).abs();
        rep.max_pooled_gap = rep.max_pooled_gap.max(pooled);
        if pooled > separation_tol {
            rep.separated += 1;
        }
        let oc = evaluate_fixture(&model, &params, &c)?;
        for v in &oc.aggregate[0] {
            let along = scale(r_mi, dot(*v, r_mi));
            rep.trigonal_offset = rep.trigonal_offset.max(norm(sub(*v, along)));
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Line-graph oracle

/// Line graph by checking every pair of edges for a shared endpoint.
pub fn linegraph_oracle(g: &SimpleGraph) -> SimpleGraph {
    let mut edges = Vec::new();
    for p in 0..g.edges.len() {
        for q in p + 1..g.edges.len() {
            let [a, b] = g.edges[p];
            let [c, d] = g.edges[q];
            if a == c || a == d || b == c || b == d {
                edges.push([p, q]);
            }
        }
    }
    SimpleGraph::new(g.edges.len(), edges)
}

pub fn random_simple_graph(rng: &mut impl Rng, max_vertices: usize, density: f64) -> SimpleGraph {
    let n = rng.random_range(2..=max_vertices);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                edges.push([u, v]);
            }
        }
    }
    SimpleGraph::new(n, edges)
}

/// Compares [`lift`] with the oracle at every depth up to `depth`. Levels
/// with no edges end the comparison early.
pub fn compare_with_oracle(g: &SimpleGraph, depth: usize) -> Result<bool> {
    let mut level = LineGraphLevel {
        level: 0,
        graph: g.clone(),
        embedding: vec![[0.0; 3]; g.n_vertices],
    };
    let mut oracle = g.clone();
    for _ in 0..depth {
        if level.graph.edges.is_empty() {
            break;
        }
        level = lift(&level)?;
        oracle = linegraph_oracle(&oracle);
        if level.graph != oracle {
            return Ok(false);
        }
    }
    Ok(true)
}
