#![allow(dead_code)]

use blbound::datum::Datum;
use blbound::linalg::{random_frame, LinearMap, SpdMatrix, Subspace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let v = gaussian(rng, d, 1).column(0).into_owned();
    let n = v.norm();
    v / n
}

pub fn random_map(rng: &mut ChaCha8Rng, r: usize, d: usize) -> LinearMap {
    LinearMap::new(gaussian(rng, r, d)).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
    let g = gaussian(rng, d, d);
    SpdMatrix::new(&g * g.transpose() + DMatrix::identity(d, d) * 0.05).unwrap()
}

pub fn random_subspace(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Subspace {
    Subspace::from_frame(random_frame(rng, d, k)).unwrap()
}

pub fn random_datum(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Datum {
    let maps = (0..n).map(|_| {
        let r = rng.random_range(1..=d);
        random_map(rng, r, d)
    });
    let maps = maps.collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    Datum::new(maps, weights).unwrap()
}

/// Loomis-Whitney maps perturbed by matrices of operator norm `eps`.
pub fn perturbed_loomis_whitney(rng: &mut ChaCha8Rng, eps: f64) -> Datum {
    let lw = Datum::loomis_whitney().unwrap();
    let maps = lw
        .maps()
        .iter()
        .map(|l| {
            let e = gaussian(rng, 2, 3);
            let norm = e.singular_values().max();
            LinearMap::new(l.matrix() + e * (eps / norm)).unwrap()
        })
        .collect();
    Datum::new(maps, vec![0.5; 3]).unwrap()
}

/// Rank-one datum `u_j^T` with the given unit directions and weights.
pub fn rank_one_datum(dirs: &[DVector<f64>], weights: Vec<f64>) -> Datum {
    let maps = dirs.iter().map(|u| LinearMap::new(DMatrix::from_row_slice(1, u.len(), u.as_slice())).unwrap()).collect();
    Datum::new(maps, weights).unwrap()
}
