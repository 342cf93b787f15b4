//! Tape primitives against naive oracles and central differences.

use std::sync::Arc;

use eninet::tensor::{Tape, Tensor, Var};
use eninet::verify::{OrthogonalSampler, SampleMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (m, k, n) in [(3, 4, 2), (5, 7, 9), (1, 1, 1), (8, 3, 6)] {
        let a = rand_tensor(&mut rng, &[m, k]);
        let b = rand_tensor(&mut rng, &[k, n]);
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = tape.matmul(va, vb).unwrap();
        let got = tape.value(c);
        assert_eq!(got.shape(), &[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += a.data()[i * k + t] * b.data()[t * n + j];
                }
                assert!((got.data()[i * n + j] - s).abs() < 1e-14, "{m}x{k}x{n} at ({i},{j})");
            }
        }
    }
}

#[test]
fn silu_matches_scalar_routine() {
    // x·σ(x) written as x / (1 + e^{-x}), evaluated independently
    let xs = [-2.0, -1.0, 1.0, 2.0];
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(xs.to_vec()));
    let y = tape.silu(x);
    for (k, &x) in xs.iter().enumerate() {
        let want = x / (1.0 + f64::exp(-x));
        assert!((tape.value(y).data()[k] - want).abs() < 1e-15);
    }
}

#[test]
fn sum_matches_sequential_accumulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[37, 5]);
    let mut tape = Tape::new();
    let va = tape.constant(a.clone());
    let s = tape.sum(va, 0).unwrap();
    let total = tape.sum_all(va);
    for j in 0..5 {
        let mut acc = 0.0;
        for i in 0..37 {
            acc += a.data()[i * 5 + j];
        }
        assert!((tape.value(s).data()[j] - acc).abs() <= 4.0 * f64::EPSILON * 37.0 * 1.5);
    }
    let seq: f64 = a.data().iter().sum();
    assert!((tape.value(total).item() - seq).abs() <= f64::EPSILON * 185.0 * 1.5);
}

#[test]
fn channel_norm_and_inner_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = rand_tensor(&mut rng, &[4, 6, 3]);
    let b = rand_tensor(&mut rng, &[4, 6, 3]);
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let n = tape.channel_norm(va).unwrap();
    let d = tape.channel_inner(va, vb).unwrap();
    assert_eq!(tape.shape(n), &[4, 6]);
    for r in 0..24 {
        let (x, y) = (&a.data()[3 * r..3 * r + 3], &b.data()[3 * r..3 * r + 3]);
        let nn = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let dd = x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        assert!((tape.value(n).data()[r] - nn).abs() < 1e-15);
        assert!((tape.value(d).data()[r] - dd).abs() < 1e-15);
    }
}

#[test]
fn scatter_add_matches_filtered_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (e, n, d) = (40, 7, 3);
    let m = rand_tensor(&mut rng, &[e, d]);
    let targets: Vec<usize> = (0..e).map(|_| rng.random_range(0..n - 1)).collect();
    let idx: Arc<[usize]> = targets.clone().into();
    let mut tape = Tape::new();
    let vm = tape.constant(m.clone());
    let out = tape.scatter_add(vm, &idx, n).unwrap();
    for t in 0..n {
        for c in 0..d {
            let want: f64 = (0..e).filter(|&k| targets[k] == t).map(|k| m.data()[k * d + c]).sum();
            assert_eq!(tape.value(out).data()[t * d + c], want);
        }
    }
    // the last row receives nothing
    assert!(tape.value(out).data()[(n - 1) * d..].iter().all(|&x| x == 0.0));
}

#[test]
fn gather_is_row_indexing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[5, 2]);
    let idx: Arc<[usize]> = vec![4, 0, 0, 2].into();
    let mut tape = Tape::new();
    let vx = tape.constant(x.clone());
    let g = tape.gather(vx, &idx).unwrap();
    for (r, &i) in idx.iter().enumerate() {
        assert_eq!(&tape.value(g).data()[2 * r..2 * r + 2], &x.data()[2 * i..2 * i + 2]);
    }
}

/// Builds an op from leaf inputs; the closure re-runs for every perturbation.
type Build<'a> = dyn Fn(&mut Tape, &[Var]) -> Var + 'a;

/// Analytic gradient of `Σ w ⊙ f(inputs)` against central differences.
fn gradcheck(name: &str, inputs: &[Tensor], f: &Build<'_>) {
    const STEP: f64 = 1e-5;
    const REL: f64 = 1e-6;
    const FLOOR: f64 = 1e-9;
    let probe = |xs: &[Tensor], w: Option<&Tensor>| -> (f64, Tensor, Vec<Tensor>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
        let y = f(&mut tape, &vars);
        let w = w.cloned().unwrap_or_else(|| {
            let mut r = ChaCha8Rng::seed_from_u64(7);
            rand_tensor(&mut r, tape.shape(y))
        });
        let vw = tape.constant(w.clone());
        let prod = tape.mul(y, vw).unwrap();
        let root = tape.sum_all(prod);
        let val = tape.value(root).item();
        let g = tape.backward(root).unwrap();
        let grads = vars.iter().zip(xs).map(|(&v, x)| g.get_or_zeros(v, x.shape())).collect();
        (val, w, grads)
    };
    let (_, w, grads) = probe(inputs, None);
    for (a, x) in inputs.iter().enumerate() {
        for k in 0..x.numel() {
            let mut plus = inputs.to_vec();
            plus[a].data_mut()[k] += STEP;
            let mut minus = inputs.to_vec();
            minus[a].data_mut()[k] -= STEP;
            let fd = (probe(&plus, Some(&w)).0 - probe(&minus, Some(&w)).0) / (2.0 * STEP);
            let an = grads[a].data()[k];
            let err = (an - fd).abs();
            assert!(
                err <= REL * an.abs().max(fd.abs()) + FLOOR,
                "{name}: input {a} element {k}: analytic {an} vs numeric {fd}"
            );
        }
    }
}

#[test]
fn primitive_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut r = |s: &[usize]| rand_tensor(&mut rng, s);
    let idx: Arc<[usize]> = vec![2, 0, 2, 1, 0].into();
    let centers: Arc<[f64]> = vec![0.0, 0.5, 1.0, 1.5, 2.0].into();

    gradcheck("matmul", &[r(&[3, 4]), r(&[4, 2])], &|t, v| t.matmul(v[0], v[1]).unwrap());
    gradcheck("linear", &[r(&[3, 4]), r(&[4, 2]), r(&[2])], &|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap());
    gradcheck("vec_linear", &[r(&[2, 4, 3]), r(&[4, 3])], &|t, v| t.vec_linear(v[0], v[1]).unwrap());
    gradcheck("add", &[r(&[3, 2]), r(&[3, 2])], &|t, v| t.add(v[0], v[1]).unwrap());
    gradcheck("sub", &[r(&[3, 2]), r(&[3, 2])], &|t, v| t.sub(v[0], v[1]).unwrap());
    gradcheck("mul", &[r(&[3, 2]), r(&[3, 2])], &|t, v| t.mul(v[0], v[1]).unwrap());
    gradcheck("mul_broadcast", &[r(&[2, 4, 3]), r(&[2, 4])], &|t, v| t.mul(v[0], v[1]).unwrap());
    gradcheck("add_broadcast", &[r(&[2, 4]), r(&[2, 4, 3])], &|t, v| t.add(v[0], v[1]).unwrap());
    gradcheck("scale", &[r(&[5])], &|t, v| t.scale(v[0], -2.5));
    gradcheck("add_scalar", &[r(&[5])], &|t, v| t.add_scalar(v[0], 0.75));
    gradcheck("silu", &[r(&[6])], &|t, v| t.silu(v[0]));
    gradcheck("sigmoid", &[r(&[6])], &|t, v| t.sigmoid(v[0]));
    gradcheck("recip", &[Tensor::from_vec(vec![0.7, 1.3, -2.0, 3.1])], &|t, v| t.recip(v[0]));
    gradcheck("sum", &[r(&[3, 4])], &|t, v| t.sum(v[0], 1).unwrap());
    gradcheck("mean", &[r(&[3, 4])], &|t, v| t.mean(v[0], 0).unwrap());
    gradcheck("sum_all", &[r(&[3, 4])], &|t, v| t.sum_all(v[0]));
    gradcheck("channel_norm", &[r(&[2, 3, 3])], &|t, v| t.channel_norm(v[0]).unwrap());
    gradcheck("channel_inner", &[r(&[2, 3, 3]), r(&[2, 3, 3])], &|t, v| {
        t.channel_inner(v[0], v[1]).unwrap()
    });
    gradcheck("scatter_add", &[r(&[5, 2])], &|t, v| t.scatter_add(v[0], &idx, 4).unwrap());
    gradcheck("gather", &[r(&[3, 2])], &|t, v| t.gather(v[0], &idx).unwrap());
    gradcheck("concat", &[r(&[3, 2]), r(&[3, 4])], &|t, v| t.concat(v[0], v[1]).unwrap());
    gradcheck("repeat_channels", &[r(&[3, 3])], &|t, v| t.repeat_channels(v[0], 4).unwrap());
    gradcheck("rbf", &[Tensor::from_vec(vec![0.3, 1.1, 1.9])], &|t, v| t.rbf(v[0], &centers, 0.5).unwrap());
    gradcheck("cosine_cutoff", &[Tensor::from_vec(vec![0.3, 1.1, 2.9, 4.2])], &|t, v| t.cosine_cutoff(v[0], 5.0));
    gradcheck("outer3", &[r(&[2, 3]), r(&[2, 3])], &|t, v| t.outer3(v[0], v[1]).unwrap());
    gradcheck("reshape", &[r(&[2, 6])], &|t, v| t.reshape(v[0], vec![3, 4]).unwrap());
}

fn orthogonal(seed: u64) -> [[f64; 3]; 3] {
    OrthogonalSampler::new(seed, SampleMode::Mixed).sample()
}

fn rotate_rows(v: &Tensor, q: &[[f64; 3]; 3]) -> Tensor {
    let mut out = v.clone();
    for (o, x) in out.data_mut().chunks_mut(3).zip(v.data().chunks(3)) {
        for i in 0..3 {
            o[i] = q[i][0] * x[0] + q[i][1] * x[1] + q[i][2] * x[2];
        }
    }
    out
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scatter_add_is_linear(
        m1 in vec_strategy(12),
        m2 in vec_strategy(12),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        targets in prop::collection::vec(0usize..3, 6),
    ) {
        let idx: Arc<[usize]> = targets.into();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![6, 2], m1).unwrap());
        let b = tape.constant(Tensor::new(vec![6, 2], m2).unwrap());
        let sa = tape.scale(a, alpha);
        let sb = tape.scale(b, beta);
        let comb = tape.add(sa, sb).unwrap();
        let lhs = tape.scatter_add(comb, &idx, 3).unwrap();
        let ra = tape.scatter_add(a, &idx, 3).unwrap();
        let rb = tape.scatter_add(b, &idx, 3).unwrap();
        let ra = tape.scale(ra, alpha);
        let rb = tape.scale(rb, beta);
        let rhs = tape.add(ra, rb).unwrap();
        prop_assert!(tape.value(lhs).max_abs_diff(tape.value(rhs)) < 1e-12);
    }

    #[test]
    fn norm_and_inner_are_orthogonally_invariant(a in vec_strategy(18), b in vec_strategy(18), seed in 0u64..10_000) {
        let q = orthogonal(seed);
        let ta = Tensor::new(vec![2, 3, 3], a).unwrap();
        let tb = Tensor::new(vec![2, 3, 3], b).unwrap();
        let mut tape = Tape::new();
        let va = tape.constant(ta.clone());
        let vb = tape.constant(tb.clone());
        let qa = tape.constant(rotate_rows(&ta, &q));
        let qb = tape.constant(rotate_rows(&tb, &q));
        let n0 = tape.channel_norm(va).unwrap();
        let n1 = tape.channel_norm(qa).unwrap();
        let d0 = tape.channel_inner(va, vb).unwrap();
        let d1 = tape.channel_inner(qa, qb).unwrap();
        prop_assert!(tape.value(n0).max_abs_diff(tape.value(n1)) < 1e-12);
        prop_assert!(tape.value(d0).max_abs_diff(tape.value(d1)) < 1e-12);
    }
}
