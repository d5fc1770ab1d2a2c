//! Heuristic search for subspaces of small perceptivity slack: a lattice of
//! candidate subspaces built from the maps' singular structure, followed by
//! seeded random frames refined by plane rotations.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::SearchBudget;
use crate::datum::Datum;
use crate::error::Result;
use crate::linalg::{count_above, principal_angle_distance, random_frame, singular_values, Subspace};

#[derive(Debug, Clone)]
pub(crate) struct SearchOutcome {
    pub min_slack: f64,
    pub witness: Subspace,
    pub samples: usize,
}

/// Slack of `W` together with a tie-breaking potential: the total excess of
/// the counted singular values over their thresholds.
fn score(datum: &Datum, alphas: &[f64], beta: f64, frame: &DMatrix<f64>) -> (f64, f64) {
    let mut acuity = 0.0;
    let mut potential = 0.0;
    for ((l, &a), q) in datum.maps().iter().zip(alphas).zip(datum.weights()) {
        let s = singular_values(&(l.matrix() * frame));
        let r = count_above(&s, a, None);
        acuity += q * r as f64;
        potential += q * s[..r].iter().map(|x| x - a).sum::<f64>();
    }
    (acuity - frame.ncols() as f64 + beta, potential)
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 - 1e-12 || (a.0 <= b.0 + 1e-12 && a.1 < b.1 - 1e-12)
}

/// Subspaces generated by kernels, row spaces and the singular subspaces
/// above and below each threshold, closed under sums and intersections up to
/// `cap` elements.
pub(crate) fn candidate_lattice(datum: &Datum, alphas: &[f64], cap: usize) -> Result<Vec<Subspace>> {
    let d = datum.ambient_dim();
    let mut lattice: Vec<Subspace> = Vec::new();
    let push = |lattice: &mut Vec<Subspace>, s: Subspace| -> bool {
        if s.dim() == 0 || lattice.len() >= cap {
            return false;
        }
        let known = lattice
            .iter()
            .any(|t| t.dim() == s.dim() && principal_angle_distance(t, &s).is_ok_and(|x| x < 1e-8));
        if !known {
            lattice.push(s);
        }
        !known
    };
    push(&mut lattice, Subspace::full(d));
    for (l, &a) in datum.maps().iter().zip(alphas) {
        let (sigma, v) = l.right_basis();
        let high = count_above(&sigma, a, None);
        let high_space = Subspace::from_frame_unchecked(v.columns(0, high).into_owned());
        for s in [l.kernel(), l.row_space(), high_space.complement(), high_space] {
            push(&mut lattice, s);
        }
    }
    let mut frontier = 0;
    while frontier < lattice.len() && lattice.len() < cap {
        let end = lattice.len();
        for i in 0..end {
            for j in frontier.max(i + 1)..end {
                let meet = lattice[i].intersect(&lattice[j])?;
                let join = lattice[i].sum(&lattice[j])?;
                push(&mut lattice, meet);
                push(&mut lattice, join);
            }
        }
        frontier = end;
    }
    Ok(lattice)
}

/// Coordinate descent over plane rotations mixing one direction of `W` with
/// one direction of `W^⊥`, trying a fixed grid of angles per pair.
fn refine(datum: &Datum, alphas: &[f64], beta: f64, frame: DMatrix<f64>, budget: &SearchBudget) -> (DMatrix<f64>, (f64, f64), usize) {
    let (d, k) = frame.shape();
    let mut f = frame;
    let mut g = Subspace::from_frame_unchecked(f.clone()).complement().frame().clone();
    let mut best = score(datum, alphas, beta, &f);
    let mut evaluations = 1;
    let angles: Vec<f64> = (1..budget.angles.max(2)).map(|i| std::f64::consts::PI * i as f64 / budget.angles as f64).collect();
    for _ in 0..budget.sweeps {
        let mut improved = false;
        for a in 0..k {
            for b in 0..d - k {
                let mut pick = None;
                for &t in &angles {
                    let (c, s) = (t.cos(), t.sin());
                    let mut cand = f.clone();
                    cand.set_column(a, &(f.column(a) * c + g.column(b) * s));
                    let sc = score(datum, alphas, beta, &cand);
                    evaluations += 1;
                    if better(sc, pick.map_or(best, |(_, p)| p)) {
                        pick = Some((t, sc));
                    }
                }
                if let Some((t, sc)) = pick {
                    let (c, s) = (t.cos(), t.sin());
                    let fa = f.column(a).into_owned();
                    let gb = g.column(b).into_owned();
                    f.set_column(a, &(&fa * c + &gb * s));
                    g.set_column(b, &(&gb * c - &fa * s));
                    best = sc;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (f, best, evaluations)
}

pub(crate) fn search(datum: &Datum, alphas: &[f64], beta: f64, budget: &SearchBudget) -> Result<SearchOutcome> {
    let d = datum.ambient_dim();
    let mut best: Option<((f64, f64), Subspace)> = None;
    let mut samples = 0;

    for w in candidate_lattice(datum, alphas, budget.lattice_cap)? {
        let sc = score(datum, alphas, beta, w.frame());
        samples += 1;
        if best.as_ref().is_none_or(|(b, _)| better(sc, *b)) {
            best = Some((sc, w));
        }
    }

    let restarts: Vec<(usize, DMatrix<f64>, (f64, f64), usize)> = (0..budget.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            rng.set_stream(r as u64);
            let k = 1 + r % d;
            let (f, sc, n) = refine(datum, alphas, beta, random_frame(&mut rng, d, k), budget);
            (r, f, sc, n)
        })
        .collect();
    // collected in restart order, so the strict comparison keeps the lowest index on ties
    for (_, f, sc, n) in restarts {
        samples += n;
        if best.as_ref().is_none_or(|(b, _)| better(sc, *b)) {
            best = Some((sc, Subspace::from_frame_unchecked(f)));
        }
    }

    let ((min_slack, _), witness) = best.unwrap_or(((beta, 0.0), Subspace::zero(d)));
    let (min_slack, witness) = if min_slack > beta { (beta, Subspace::zero(d)) } else { (min_slack, witness) };
    Ok(SearchOutcome { min_slack, witness, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_contains_coordinate_subspaces_for_loomis_whitney() {
        let lw = Datum::loomis_whitney().unwrap();
        let lattice = candidate_lattice(&lw, &[0.0; 3], 256).unwrap();
        for idx in [vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![0, 2]] {
            let target = Subspace::coordinate(3, &idx);
            assert!(
                lattice.iter().any(|s| principal_angle_distance(s, &target).unwrap() < 1e-8),
                "missing span{idx:?}"
            );
        }
    }

    #[test]
    fn search_finds_young_violation() {
        let y = Datum::young([2.0 / 3.0; 3]).unwrap();
        let out = search(&y, &[1.0; 3], 0.0, &SearchBudget::default()).unwrap();
        assert!(out.min_slack < -0.5);
    }
}
