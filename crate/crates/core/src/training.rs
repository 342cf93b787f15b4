//! Losses, metrics, data splits and the optimization loop.
//!
//! Fitting force labels needs the gradient of `‖F − F_ref‖²` with respect to
//! the parameters, where `F` is itself a position gradient. That mixed second
//! derivative is obtained with one extra forward/backward pass over dual
//! numbers: seeding the position tangents with `−∂L/∂F` and reading the tangent
//! part of the parameter gradients gives exactly `Σ_i (∂L/∂F_i)·∂F_i/∂θ`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::GraphBatch;
use crate::geometry::{Mat3, Molecule, Vec3};
use crate::model::{positions_tensor, Eninet, Head};
use crate::params::ModelParams;
use crate::tensor::{Dual, Tape, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_e: f64,
    pub lambda_f: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub split: SplitFractions,
    /// Fit a per-atom shift and a scale on the training split and store them
    /// in the model configuration.
    pub standardize: bool,
    pub precision: Precision,
    /// Epochs without validation improvement before the rate is decayed.
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_e: 0.05,
            lambda_f: 0.95,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 100,
            seed: 0,
            split: SplitFractions::default(),
            standardize: false,
            precision: Precision::F64,
            plateau_patience: 25,
            plateau_factor: 0.5,
            min_learning_rate: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !(self.lambda_e >= 0.0) || !(self.lambda_f >= 0.0) {
            return bad("learning rate and loss weights must be non-negative");
        }
        let s = &self.split;
        if [s.train, s.val, s.test].iter().any(|&f| !(0.0..=1.0).contains(&f)) || (s.train + s.val + s.test - 1.0).abs() > 1e-9 {
            return bad("split fractions must be in [0, 1] and sum to 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau_factor must be in (0, 1]");
        }
        Ok(())
    }
}

/// `(1/B) Σ_b [λ_e (E_b − E_b^ref)² + λ_f/(3N_b) Σ_i ‖F_bi − F_bi^ref‖²]`.
pub fn joint_loss(
    e: &[f64],
    e_ref: &[f64],
    f: &[Vec<Vec3>],
    f_ref: &[Vec<Vec3>],
    lambda_e: f64,
    lambda_f: f64,
) -> Result<f64> {
    let b = e.len();
    if e_ref.len() != b || f.len() != b || f_ref.len() != b {
        return Err(Error::Length(format!(
            "batch sizes {} / {} / {} / {}",
            b,
            e_ref.len(),
            f.len(),
            f_ref.len()
        )));
    }
    if b == 0 {
        return Err(Error::Length("empty batch".into()));
    }
    let mut total = 0.0;
    for k in 0..b {
        if f[k].len() != f_ref[k].len() {
            return Err(Error::Length(format!("molecule {k}: {} vs {} force rows", f[k].len(), f_ref[k].len())));
        }
        let sq: f64 = f[k]
            .iter()
            .zip(&f_ref[k])
            .map(|(a, r)| (0..3).map(|x| (a[x] - r[x]).powi(2)).sum::<f64>())
            .sum();
        let n = f[k].len().max(1) as f64;
        total += lambda_e * (e[k] - e_ref[k]).powi(2) + lambda_f / (3.0 * n) * sq;
    }
    Ok(total / b as f64)
}

/// `√((1/N) Σ_i (‖α_i − α̂_i‖_F / N_i)²)`.
pub fn per_atom_tensor_rmse(preds: &[Mat3], refs: &[Mat3], atom_counts: &[usize]) -> Result<f64> {
    if preds.len() != refs.len() || preds.len() != atom_counts.len() {
        return Err(Error::Length(format!(
            "{} predictions, {} references, {} atom counts",
            preds.len(),
            refs.len(),
            atom_counts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Length("empty input".into()));
    }
    let s: f64 = preds
        .iter()
        .zip(refs)
        .zip(atom_counts)
        .map(|((p, r), &n)| (frob_diff(p, r) / n as f64).powi(2))
        .sum();
    Ok((s / preds.len() as f64).sqrt())
}

fn frob_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += (a[i][j] - b[i][j]).powi(2);
        }
    }
    s.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

impl Metrics {
    /// Over all component errors.
    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
        for e in errors {
            n += 1;
            abs += e.abs();
            sq += e * e;
        }
        let n = n.max(1) as f64;
        Self {
            mae: abs / n,
            rmse: (sq / n).sqrt(),
        }
    }
}

/// Disjoint index sets covering `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, fractions: &SplitFractions, seed: u64) -> Splits {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions.train * n as f64).round() as usize).min(n);
    let n_val = ((fractions.val * n as f64).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Splits { train: idx, val, test }
}

/// Adaptive-moment optimizer with plateau decay of the step size.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    best: f64,
    stale: usize,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (_, p)) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                *x -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }

    /// Decays the rate after `patience` calls without improvement.
    pub fn observe(&mut self, loss: f64, patience: usize, factor: f64, min_lr: f64) {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale > patience {
                self.lr = (self.lr * factor).max(min_lr.min(self.lr));
                self.stale = 0;
            }
        }
    }
}

/// Which labels the model is fitted to; follows the model head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Task {
    EnergyForces,
    Scalar,
    Polarizability,
}

fn task_for(model: &Eninet) -> Task {
    match model.config.head {
        Head::ScalarForce => Task::EnergyForces,
        Head::Scalar => Task::Scalar,
        Head::Polarizability => Task::Polarizability,
    }
}

fn missing(what: &str, k: usize) -> Error {
    Error::Config(format!("molecule {k} has no {what} label"))
}

/// Loss and its parameter gradient on one batch.
pub fn loss_and_gradient(
    model: &Eninet,
    params: &ModelParams,
    mols: &[&Molecule],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let batch = model.batch(mols)?;
    let b = mols.len() as f64;
    match task_for(model) {
        Task::EnergyForces => energy_force_gradient(model, params, mols, &batch, cfg),
        Task::Scalar => {
            let refs: Vec<f64> = mols
                .iter()
                .enumerate()
                .map(|(k, m)| m.energy.ok_or_else(|| missing("energy", k)))
                .collect::<Result<_>>()?;
            let mut tape = Tape::<f64>::new();
            let p = params.bind(&mut tape, true);
            let out = model.forward(&mut tape, &p, &batch, positions_tensor(&batch), false)?;
            let y = tape.value(out.scalar).data().to_vec();
            let loss = y.iter().zip(&refs).map(|(a, r)| (a - r).powi(2)).sum::<f64>() / b;
            let c: Vec<f64> = y.iter().zip(&refs).map(|(a, r)| 2.0 * (a - r) / b).collect();
            let c = tape.constant(Tensor::from_vec(c));
            let w = tape.mul(out.scalar, c)?;
            let root = tape.sum_all(w);
            let g = tape.backward(root)?;
            Ok((loss, collect_grads(&g, &p, params, |t| t.data().to_vec())))
        }
        Task::Polarizability => {
            let mut tape = Tape::<f64>::new();
            let p = params.bind(&mut tape, true);
            let out = model.forward(&mut tape, &p, &batch, positions_tensor(&batch), false)?;
            let alpha = out.polarizability.expect("polarizability head");
            let a = tape.value(alpha).data().to_vec();
            let mut loss = 0.0;
            let mut c = vec![0.0; a.len()];
            for (k, m) in mols.iter().enumerate() {
                let r = m.polarizability.ok_or_else(|| missing("polarizability", k))?;
                let n2 = (m.n_atoms() as f64).powi(2);
                for i in 0..3 {
                    for j in 0..3 {
                        let d = a[9 * k + 3 * i + j] - r[i][j];
                        loss += d * d / n2 / b;
                        c[9 * k + 3 * i + j] = 2.0 * d / n2 / b;
                    }
                }
            }
            let c = tape.constant(Tensor::new(vec![mols.len(), 3, 3], c)?);
            let w = tape.mul(alpha, c)?;
            let root = tape.sum_all(w);
            let g = tape.backward(root)?;
            Ok((loss, collect_grads(&g, &p, params, |t| t.data().to_vec())))
        }
    }
}

fn collect_grads<T: crate::tensor::Real>(
    g: &crate::tensor::Gradients<T>,
    vars: &[crate::tensor::Var],
    params: &ModelParams,
    read: impl Fn(&Tensor<T>) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    vars.iter()
        .zip(params.iter())
        .map(|(&v, (_, t))| g.get(v).map(&read).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect()
}

fn energy_force_gradient(
    model: &Eninet,
    params: &ModelParams,
    mols: &[&Molecule],
    batch: &GraphBatch,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let b = mols.len() as f64;
    let e_ref: Vec<f64> = mols
        .iter()
        .enumerate()
        .map(|(k, m)| m.energy.ok_or_else(|| missing("energy", k)))
        .collect::<Result<_>>()?;
    let use_forces = cfg.lambda_f != 0.0;

    // Pass 1: energies and forces.
    let mut tape = Tape::<f64>::new();
    let p = params.bind(&mut tape, !use_forces);
    let out = model.forward(&mut tape, &p, batch, positions_tensor(batch), use_forces)?;
    let e = tape.value(out.scalar).data().to_vec();
    let c: Vec<f64> = e.iter().zip(&e_ref).map(|(x, r)| 2.0 * cfg.lambda_e * (x - r) / b).collect();

    if !use_forces {
        let loss = e.iter().zip(&e_ref).map(|(x, r)| cfg.lambda_e * (x - r).powi(2)).sum::<f64>() / b;
        let cv = tape.constant(Tensor::from_vec(c));
        let w = tape.mul(out.scalar, cv)?;
        let root = tape.sum_all(w);
        let g = tape.backward(root)?;
        return Ok((loss, collect_grads(&g, &p, params, |t| t.data().to_vec())));
    }

    let root = tape.sum_all(out.scalar);
    let g = tape.backward(root)?;
    let grad_r = g.get_or_zeros(out.positions, &[batch.n_atoms, 3]).into_data();
    let forces: Vec<Vec<Vec3>> = split_rows(&grad_r, &batch.atoms_per_mol, -1.0);
    let f_ref: Vec<Vec<Vec3>> = mols
        .iter()
        .enumerate()
        .map(|(k, m)| m.forces.clone().ok_or_else(|| missing("forces", k)))
        .collect::<Result<_>>()?;
    let loss = joint_loss(&e, &e_ref, &forces, &f_ref, cfg.lambda_e, cfg.lambda_f)?;

    // ∂L/∂F_i, laid out like the positions.
    let mut u = Vec::with_capacity(3 * batch.n_atoms);
    for (k, (f, r)) in forces.iter().zip(&f_ref).enumerate() {
        let w = 2.0 * cfg.lambda_f / (b * 3.0 * mols[k].n_atoms() as f64);
        for (a, bb) in f.iter().zip(r) {
            for x in 0..3 {
                u.push(w * (a[x] - bb[x]));
            }
        }
    }

    // Pass 2: F_i = −∂E/∂r_i, so Σ u_i·∂F_i/∂θ = ∂/∂θ of the directional
    // derivative of E along −u. Seed that direction as position tangents.
    let mut tape = Tape::<Dual>::new();
    let p = params.bind(&mut tape, true);
    let pos: Vec<Dual> = batch
        .positions
        .iter()
        .flatten()
        .zip(&u)
        .map(|(&r, &du)| Dual::new(r, -du))
        .collect();
    let out = model.forward(&mut tape, &p, batch, Tensor::new(vec![batch.n_atoms, 3], pos)?, false)?;
    let weights: Vec<Dual> = c.iter().map(|&cb| Dual::new(1.0, cb)).collect();
    let wv = tape.constant(Tensor::from_vec(weights));
    let w = tape.mul(out.scalar, wv)?;
    let root = tape.sum_all(w);
    let g = tape.backward(root)?;
    Ok((loss, collect_grads(&g, &p, params, |t| t.eps().into_data())))
}

fn split_rows(flat: &[f64], counts: &[usize], sign: f64) -> Vec<Vec<Vec3>> {
    let mut out = Vec::with_capacity(counts.len());
    let mut i = 0;
    for &n in counts {
        out.push(
            (i..i + n)
                .map(|a| [sign * flat[3 * a], sign * flat[3 * a + 1], sign * flat[3 * a + 2]])
                .collect(),
        );
        i += n;
    }
    out
}

/// One line of the metric history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub target: String,
    pub mae: f64,
    pub rmse: f64,
    pub loss: f64,
}

/// Metrics of `params` on a set of molecules, one record per target.
pub fn evaluate(
    model: &Eninet,
    params: &ModelParams,
    mols: &[&Molecule],
    cfg: &TrainConfig,
    epoch: usize,
    split: &str,
) -> Result<Vec<MetricRecord>> {
    let mut records = Vec::new();
    if mols.is_empty() {
        return Ok(records);
    }
    let mut preds = Vec::with_capacity(mols.len());
    for chunk in mols.chunks(cfg.batch_size.max(1)) {
        preds.extend(model.predict(params, chunk)?);
    }
    let rec = |target: &str, m: Metrics, loss: f64| MetricRecord {
        epoch,
        split: split.to_string(),
        target: target.to_string(),
        mae: m.mae,
        rmse: m.rmse,
        loss,
    };
    match task_for(model) {
        Task::EnergyForces | Task::Scalar => {
            let e_ref: Vec<f64> = mols
                .iter()
                .enumerate()
                .map(|(k, m)| m.energy.ok_or_else(|| missing("energy", k)))
                .collect::<Result<_>>()?;
            let e: Vec<f64> = preds.iter().map(|p| p.scalar).collect();
            let em = Metrics::from_errors(e.iter().zip(&e_ref).map(|(a, r)| a - r));
            if task_for(model) == Task::Scalar {
                records.push(rec("scalar", em, em.rmse * em.rmse));
                return Ok(records);
            }
            let f: Vec<Vec<Vec3>> = preds.iter().map(|p| p.forces.clone().expect("force head")).collect();
            let f_ref: Vec<Vec<Vec3>> = mols
                .iter()
                .enumerate()
                .map(|(k, m)| m.forces.clone().ok_or_else(|| missing("forces", k)))
                .collect::<Result<_>>()?;
            let loss = joint_loss(&e, &e_ref, &f, &f_ref, cfg.lambda_e, cfg.lambda_f)?;
            let fm = Metrics::from_errors(
                f.iter()
                    .zip(&f_ref)
                    .flat_map(|(a, r)| a.iter().zip(r).flat_map(|(x, y)| (0..3).map(move |c| x[c] - y[c]))),
            );
            records.push(rec("energy", em, loss));
            records.push(rec("forces", fm, loss));
        }
        Task::Polarizability => {
            let a: Vec<Mat3> = preds.iter().map(|p| p.polarizability.expect("polarizability head")).collect();
            let r: Vec<Mat3> = mols
                .iter()
                .enumerate()
                .map(|(k, m)| m.polarizability.ok_or_else(|| missing("polarizability", k)))
                .collect::<Result<_>>()?;
            let counts: Vec<usize> = mols.iter().map(|m| m.n_atoms()).collect();
            let rmse = per_atom_tensor_rmse(&a, &r, &counts)?;
            let m = Metrics::from_errors(
                a.iter()
                    .zip(&r)
                    .flat_map(|(x, y)| (0..9).map(move |k| x[k / 3][k % 3] - y[k / 3][k % 3])),
            );
            records.push(MetricRecord {
                epoch,
                split: split.to_string(),
                target: "polarizability".into(),
                mae: m.mae,
                rmse,
                loss: rmse * rmse,
            });
        }
    }
    Ok(records)
}

/// Per-atom energy shift and residual scale from a training set.
pub fn fit_standardization(mols: &[&Molecule]) -> Option<(f64, f64)> {
    let pairs: Vec<(f64, f64)> = mols
        .iter()
        .filter_map(|m| m.energy.map(|e| (e, m.n_atoms() as f64)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let shift = pairs.iter().map(|(e, n)| e / n).sum::<f64>() / pairs.len() as f64;
    let var = pairs.iter().map(|(e, n)| (e - shift * n).powi(2)).sum::<f64>() / pairs.len() as f64;
    let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    Some((shift, scale))
}

pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (training loss when there
    /// is no validation split).
    pub params: ModelParams,
    pub history: Vec<MetricRecord>,
    /// Mean training-batch loss per epoch, epoch 1 onward.
    pub train_loss: Vec<f64>,
    pub splits: Splits,
    pub best_epoch: usize,
}

/// Fits `params` in place of a copy. Epoch 0 records the initial metrics.
/// `model.config` receives the standardization constants when enabled.
pub fn train(
    model: &mut Eninet,
    params: ModelParams,
    data: &[Molecule],
    cfg: &TrainConfig,
    mut on_record: impl FnMut(&MetricRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check_params(&params)?;
    let splits = split_indices(data.len(), &cfg.split, cfg.seed);
    if splits.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let train_set: Vec<&Molecule> = splits.train.iter().map(|&i| &data[i]).collect();
    let val_set: Vec<&Molecule> = splits.val.iter().map(|&i| &data[i]).collect();
    if cfg.standardize && task_for(model) != Task::Polarizability {
        if let Some((shift, scale)) = fit_standardization(&train_set) {
            model.config.target_shift = shift;
            model.config.target_scale = scale;
        }
    }

    let mut params = params;
    let mut opt = Adam::new(&params, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut history = Vec::new();
    let mut emit = |recs: Vec<MetricRecord>, history: &mut Vec<MetricRecord>| {
        for r in recs {
            on_record(&r);
            history.push(r);
        }
    };

    let select = |recs: &[MetricRecord]| recs.first().map(|r| r.loss).unwrap_or(f64::INFINITY);
    let initial = evaluate(model, &params, &train_set, cfg, 0, "train")?;
    let val0 = evaluate(model, &params, &val_set, cfg, 0, "val")?;
    let mut best = if val_set.is_empty() { select(&initial) } else { select(&val0) };
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    emit(initial, &mut history);
    emit(val0, &mut history);

    let mut order = splits.train.clone();
    let mut train_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mols: Vec<&Molecule> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = loss_and_gradient(model, &params, &mols, cfg)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    last_good: Box::new(params),
                });
            }
            if cfg.learning_rate != 0.0 {
                opt.step(&mut params, &grads);
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        train_loss.push(mean);

        let tr = evaluate(model, &params, &train_set, cfg, epoch, "train")?;
        let va = evaluate(model, &params, &val_set, cfg, epoch, "val")?;
        let score = if val_set.is_empty() { select(&tr) } else { select(&va) };
        if !score.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_good: Box::new(best_params),
            });
        }
        if score < best {
            best = score;
            best_params = params.clone();
            best_epoch = epoch;
        }
        opt.observe(score, cfg.plateau_patience, cfg.plateau_factor, cfg.min_learning_rate);
        emit(tr, &mut history);
        emit(va, &mut history);
    }
    Ok(TrainOutcome {
        params: best_params,
        history,
        train_loss,
        splits,
        best_epoch,
    })
}
