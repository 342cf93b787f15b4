//! Losses, gradients and the training loop.

mod common;

use eninet::geometry::{mat_vec, Mat3, Molecule, Vec3};
use eninet::model::{Eninet, Head, ModelConfig};
use eninet::training::{
    joint_loss, loss_and_gradient, per_atom_tensor_rmse, split_indices, train, SplitFractions, TrainConfig,
};
use eninet::verify::{random_molecules, OrthogonalSampler, SampleMode};
use eninet::{Error, ModelParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(head: Head) -> ModelConfig {
    ModelConfig { d: 4, n_blocks: 1, n_bf: 6, head, ..ModelConfig::default() }
}

fn rv(rng: &mut impl Rng) -> Vec3 {
    [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
}

#[test]
fn joint_loss_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let b = rng.random_range(1..6);
        let sizes: Vec<usize> = (0..b).map(|_| rng.random_range(1..8)).collect();
        let e: Vec<f64> = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
        let e_ref: Vec<f64> = (0..b).map(|_| rng.random_range(-5.0..5.0)).collect();
        let f: Vec<Vec<Vec3>> = sizes.iter().map(|&n| (0..n).map(|_| rv(&mut rng)).collect()).collect();
        let f_ref: Vec<Vec<Vec3>> = sizes.iter().map(|&n| (0..n).map(|_| rv(&mut rng)).collect()).collect();
        let mut want = 0.0;
        for k in 0..b {
            let mut s = 0.0;
            for i in 0..sizes[k] {
                for a in 0..3 {
                    let d = f[k][i][a] - f_ref[k][i][a];
                    s += d * d;
                }
            }
            want += 0.05 * (e[k] - e_ref[k]) * (e[k] - e_ref[k]) + 0.95 / (3.0 * sizes[k] as f64) * s;
        }
        want /= b as f64;
        let got = joint_loss(&e, &e_ref, &f, &f_ref, 0.05, 0.95).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn tensor_rmse_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 7;
    let m = |rng: &mut ChaCha8Rng| -> Mat3 { [rv(rng), rv(rng), rv(rng)] };
    let preds: Vec<Mat3> = (0..n).map(|_| m(&mut rng)).collect();
    let refs: Vec<Mat3> = (0..n).map(|_| m(&mut rng)).collect();
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(1..20)).collect();
    let mut acc = 0.0;
    for k in 0..n {
        let mut fro = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                fro += (preds[k][i][j] - refs[k][i][j]).powi(2);
            }
        }
        acc += (fro.sqrt() / counts[k] as f64).powi(2);
    }
    let want = (acc / n as f64).sqrt();
    assert!((per_atom_tensor_rmse(&preds, &refs, &counts).unwrap() - want).abs() < 1e-14);
}

fn labelled(seed: u64, count: usize) -> Vec<Molecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_molecules(seed, count, 3, 6)
        .into_iter()
        .map(|m| {
            let f = (0..m.n_atoms()).map(|_| rv(&mut rng)).collect();
            let a = [[1.0, 0.2, 0.0], [0.2, 2.0, -0.1], [0.0, -0.1, 0.5]];
            m.with_energy(rng.random_range(-3.0..3.0)).with_forces(f).unwrap().with_polarizability(a)
        })
        .collect()
}

fn fd_check(model: &Eninet, params: &ModelParams, mols: &[&Molecule], cfg: &TrainConfig) {
    let (_, grads) = loss_and_gradient(model, params, mols, cfg).unwrap();
    let h = 1e-5;
    let mut checked = 0;
    for (id, g) in grads.iter().enumerate() {
        for k in (0..g.len()).step_by(5) {
            let at = |d: f64| {
                let mut p = params.clone();
                p.iter_mut().nth(id).unwrap().1.data_mut()[k] += d;
                loss_and_gradient(model, &p, mols, cfg).unwrap().0
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let err = (g[k] - fd).abs();
            assert!(err <= 1e-5 * g[k].abs().max(fd.abs()) + 1e-8, "param {id}[{k}]: {} vs {fd}", g[k]);
            checked += 1;
        }
    }
    assert!(checked > 50);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let data = labelled(3, 3);
    let mols: Vec<&Molecule> = data.iter().collect();
    for head in [Head::ScalarForce, Head::Scalar, Head::Polarizability] {
        let model = Eninet::new(tiny(head)).unwrap();
        let params = model.init_params(4).unwrap();
        fd_check(&model, &params, &mols, &TrainConfig::default());
    }
    // energy-only path
    let model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
    let params = model.init_params(5).unwrap();
    fd_check(&model, &params, &mols, &TrainConfig { lambda_f: 0.0, ..TrainConfig::default() });
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = labelled(6, 6);
    let mut model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
    let params = model.init_params(1).unwrap();
    let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 2, ..TrainConfig::default() };
    let out = train(&mut model, params.clone(), &data, &cfg, |_| {}).unwrap();
    for ((_, a), (_, b)) in params.iter().zip(out.params.iter()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn small_step_decreases_energy_loss() {
    let data = labelled(7, 4);
    let mols: Vec<&Molecule> = data.iter().collect();
    let model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
    let params = model.init_params(2).unwrap();
    let cfg = TrainConfig { lambda_f: 0.0, ..TrainConfig::default() };
    let (l0, g) = loss_and_gradient(&model, &params, &mols, &cfg).unwrap();
    let mut stepped = params.clone();
    for ((_, t), g) in stepped.iter_mut().zip(&g) {
        for (x, d) in t.data_mut().iter_mut().zip(g) {
            *x -= 1e-4 * d;
        }
    }
    let (l1, _) = loss_and_gradient(&model, &stepped, &mols, &cfg).unwrap();
    assert!(l1 < l0, "{l1} !< {l0}");
}

#[test]
fn history_records_every_epoch() {
    let data = common::lj_conformers(2, 10);
    let mut model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
    let params = model.init_params(1).unwrap();
    let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let mut seen = 0;
    let out = train(&mut model, params, &data, &cfg, |_| seen += 1).unwrap();
    assert_eq!(seen, out.history.len());
    assert_eq!(out.train_loss.len(), 3);
    for epoch in 0..=3 {
        for split in ["train", "val"] {
            for target in ["energy", "forces"] {
                assert!(out.history.iter().any(|r| r.epoch == epoch && r.split == split && r.target == target));
            }
        }
    }
    assert!(out.history.iter().all(|r| r.mae <= r.rmse + 1e-15 && r.mae >= 0.0));
    let line = serde_json::to_value(&out.history[0]).unwrap();
    for key in ["epoch", "split", "target", "mae", "rmse", "loss"] {
        assert!(line.get(key).is_some());
    }
}

#[test]
fn nan_labels_report_divergence() {
    let mut data = labelled(8, 4);
    data[1].energy = Some(f64::NAN);
    let mut model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
    let params = model.init_params(1).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        split: SplitFractions { train: 1.0, val: 0.0, test: 0.0 },
        ..TrainConfig::default()
    };
    match train(&mut model, params.clone(), &data, &cfg, |_| {}) {
        Err(Error::Diverged { epoch, last_good }) => {
            assert_eq!(epoch, 1);
            assert_eq!(*last_good, params);
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training on NaN labels succeeded"),
    }
}

#[test]
fn rotated_data_gives_the_same_trajectory() {
    let data = common::lj_conformers(3, 8);
    let q = OrthogonalSampler::new(4, SampleMode::Reflection).sample();
    let rotated: Vec<Molecule> = data
        .iter()
        .map(|m| {
            let f = m.forces.as_ref().unwrap().iter().map(|&f| mat_vec(&q, f)).collect();
            let mut r = m.transformed(&q);
            r.forces = Some(f);
            r
        })
        .collect();
    let cfg = TrainConfig { epochs: 4, batch_size: 4, ..TrainConfig::default() };
    let run = |d: &[Molecule]| {
        let mut model = Eninet::new(tiny(Head::ScalarForce)).unwrap();
        let p = model.init_params(9).unwrap();
        train(&mut model, p, d, &cfg, |_| {}).unwrap().train_loss
    };
    let (a, b) = (run(&data), run(&rotated));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{x} vs {y}");
    }
}

proptest! {
    #[test]
    fn splits_are_disjoint_exhaustive_and_seeded(n in 1usize..200, seed in 0u64..1000, tr in 0.0f64..1.0) {
        let va = (1.0 - tr) / 2.0;
        let fr = SplitFractions { train: tr, val: va, test: 1.0 - tr - va };
        let s = split_indices(n, &fr, seed);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s, split_indices(n, &fr, seed));
    }
}
