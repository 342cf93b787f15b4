use eninet::geometry::{mat_mul, transpose, Mat3};
use eninet::linegraph::SimpleGraph;
use eninet::model::{Eninet, Head, ModelConfig, Mutation};
use eninet::verify::{
    certify_equivariance, certify_invariance, certify_with_matrices, det3, linegraph_oracle, model_evaluator,
    orthogonality_error, random_molecules, relative_deviation, OrthogonalSampler, SampleMode, REFLECT_Z,
};
use proptest::prelude::*;

const EYE: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[test]
fn oracle_small_graphs() {
    let tri = SimpleGraph::new(3, [[0, 1], [1, 2], [0, 2]]);
    assert_eq!(linegraph_oracle(&tri), SimpleGraph::new(3, [[0, 1], [0, 2], [1, 2]]));
    let star = SimpleGraph::new(4, [[0, 1], [0, 2], [0, 3]]);
    assert_eq!(linegraph_oracle(&star), SimpleGraph::new(3, [[0, 1], [0, 2], [1, 2]]));
    let path = SimpleGraph::new(3, [[0, 1], [1, 2]]);
    assert_eq!(linegraph_oracle(&path), SimpleGraph::new(2, [[0, 1]]));
}

#[test]
fn identity_certifies_with_zero_deviation() {
    let m = Eninet::new(ModelConfig { head: Head::Polarizability, ..ModelConfig::small() }).unwrap();
    let p = m.init_params(1).unwrap();
    let eval = model_evaluator(&m, &p);
    let cert = certify_with_matrices(&eval, &random_molecules(1, 3, 3, 8), &[EYE], 1e-10).unwrap();
    assert!(cert.passed);
    assert!(cert.checks.iter().all(|c| c.max_deviation == 0.0));
}

#[test]
fn vector_bias_mutant_is_caught() {
    let mols = random_molecules(2, 4, 3, 8);
    for head in [Head::ScalarForce, Head::Polarizability] {
        let m = Eninet::new(ModelConfig { head, ..ModelConfig::small() }).unwrap();
        let p = m.init_params(3).unwrap();
        let healthy = model_evaluator(&m, &p);
        let mut s = OrthogonalSampler::new(4, SampleMode::Mixed);
        assert!(certify_equivariance(&healthy, &mols, &mut s, 6, 1e-10).unwrap().passed);

        let broken = m.clone().with_mutation(Mutation::VectorBias([0.2, -0.1, 0.3]));
        let eval = model_evaluator(&broken, &p);
        let mut s = OrthogonalSampler::new(4, SampleMode::Mixed);
        let cert = certify_equivariance(&eval, &mols, &mut s, 6, 1e-10).unwrap();
        assert!(!cert.passed);
        let worst = cert.checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max);
        assert!(worst > 1e-3, "mutant deviation only {worst}");
    }
}

#[test]
fn invariance_certificate_covers_translation_and_permutation() {
    let m = Eninet::new(ModelConfig::small()).unwrap();
    let p = m.init_params(5).unwrap();
    let eval = model_evaluator(&m, &p);
    let cert = certify_invariance(&eval, &random_molecules(6, 3, 3, 10), 7, 5, 1e-10).unwrap();
    assert!(cert.passed, "{}", cert.report());
    let json: serde_json::Value = serde_json::from_str(&cert.to_json()).unwrap();
    assert_eq!(json["passed"], true);
}

#[test]
fn relative_deviation_floor() {
    assert_eq!(relative_deviation(&[1e-3], &[0.0]), 1e-3);
    assert_eq!(relative_deviation(&[4.0, 0.0], &[2.0, 0.0]), 1.0);
    assert_eq!(relative_deviation(&[1.0], &[1.0, 2.0]), f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn sampler_emits_orthogonal_matrices(seed in 0u64..u64::MAX, mode in 0u8..3) {
        let mode = [SampleMode::Rotation, SampleMode::Reflection, SampleMode::Mixed][mode as usize];
        let mut s = OrthogonalSampler::new(seed, mode);
        for k in 0..4 {
            let q = s.sample();
            prop_assert!(orthogonality_error(&q) < 1e-12);
            let qtq = mat_mul(&transpose(&q), &q);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((qtq[i][j] - EYE[i][j]).abs() < 1e-12);
                }
            }
            let det = det3(&q);
            match mode {
                SampleMode::Rotation => prop_assert!((det - 1.0).abs() < 1e-12),
                SampleMode::Reflection => prop_assert!((det + 1.0).abs() < 1e-12),
                SampleMode::Mixed => {
                    let want = if k % 2 == 0 { 1.0 } else { -1.0 };
                    prop_assert!((det - want).abs() < 1e-12)
                }
            }
        }
        prop_assert!((det3(&REFLECT_Z) + 1.0).abs() < 1e-15);
    }
}

#[test]
fn nearly_dependent_draw_stays_orthogonal() {
    // one of this seed's Gaussian draws is badly conditioned
    let mut s = OrthogonalSampler::new(7586895024439993881, SampleMode::Rotation);
    for _ in 0..4 {
        assert!(orthogonality_error(&s.sample()) < 1e-12);
    }
}
