//! Shared fixtures for integration tests.
#![allow(dead_code)]

use eninet::geometry::{Molecule, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LJ_EPS: f64 = 0.5;
pub const LJ_SIGMA: f64 = 1.2;

/// Lennard-Jones energy and forces, written out pair by pair.
pub fn lennard_jones(pos: &[Vec3]) -> (f64, Vec<Vec3>) {
    let mut e = 0.0;
    let mut f = vec![[0.0; 3]; pos.len()];
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1], pos[i][2] - pos[j][2]];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let s6 = (LJ_SIGMA * LJ_SIGMA / r2).powi(3);
            e += 4.0 * LJ_EPS * (s6 * s6 - s6);
            // -dE/dr_i = 24ε(2 s12 - s6)/r² · d
            let c = 24.0 * LJ_EPS * (2.0 * s6 * s6 - s6) / r2;
            for a in 0..3 {
                f[i][a] += c * d[a];
                f[j][a] -= c * d[a];
            }
        }
    }
    (e, f)
}

/// Jittered conformers of a 5-atom cluster near its LJ minimum.
pub fn lj_conformers(seed: u64, count: usize) -> Vec<Molecule> {
    let r0 = 2f64.powf(1.0 / 6.0) * LJ_SIGMA;
    let a = r0 / 3f64.sqrt();
    let h = r0 * (2.0f64 / 3.0).sqrt();
    let base: [Vec3; 5] = [
        [a, 0.0, 0.0],
        [-a / 2.0, r0 / 2.0, 0.0],
        [-a / 2.0, -r0 / 2.0, 0.0],
        [0.0, 0.0, h],
        [0.0, 0.0, -h],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let pos: Vec<Vec3> = base
                .iter()
                .map(|p| std::array::from_fn(|k| p[k] + rng.random_range(-0.15..0.15)))
                .collect();
            let (e, f) = lennard_jones(&pos);
            Molecule::new(vec![18; 5], pos)
                .unwrap()
                .with_energy(e)
                .with_forces(f)
                .unwrap()
        })
        .collect()
}
