//! Feasibility of systems of Grassmannian constraints: "is there a `k`-plane
//! `W` with `‖π_W v‖² ≤ c`, `‖π_W v'‖² ≥ b`, ...?".
//!
//! Lines and hyperplanes reduce to slabs and bands on the unit sphere, which
//! are decided exactly by enumerating the critical points of a generic linear
//! functional. Other dimensions fall back to multi-start descent on the
//! squared constraint violation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{orthonormalize, principal_angles, random_frame, Subspace};

/// Membership slack of the exact sphere solver, biased towards feasibility.
const SPHERE_TOL: f64 = 1e-12;

/// Squared violation above which descent declares a system infeasible.
pub const TAU_FEAS: f64 = 1e-8;

/// Margin by which descent tightens thresholds when looking for a witness.
const TIGHTEN: f64 = 1e-7;

const GENERIC_SEED: u64 = 0x5eed_0f_5f3e;

#[derive(Debug, Clone)]
pub(crate) enum Constraint {
    /// `‖π_W v‖² ≤ c`, `v` a unit vector.
    AtMost { v: DVector<f64>, c: f64 },
    /// `‖π_W v‖² ≥ b`, `v` a unit vector.
    AtLeast { v: DVector<f64>, b: f64 },
    /// `Σ_{i ≤ p} θ_i(W, K)² ≤ r²` for the ascending principal angles.
    AngleBall { k: Subspace, p: usize, r2: f64 },
}

impl Constraint {
    pub fn at_most(v: &DVector<f64>, c: f64) -> Self {
        Self::AtMost { v: v.normalize(), c }
    }

    pub fn at_least(v: &DVector<f64>, b: f64) -> Self {
        Self::AtLeast { v: v.normalize(), b }
    }

    fn is_line_functional(&self) -> bool {
        !matches!(self, Self::AngleBall { .. })
    }

    fn tightened(&self, margin: f64) -> Self {
        match self {
            Self::AtMost { v, c } => Self::AtMost { v: v.clone(), c: c - margin },
            Self::AtLeast { v, b } => Self::AtLeast { v: v.clone(), b: b + margin },
            Self::AngleBall { k, p, r2 } => Self::AngleBall { k: k.clone(), p: *p, r2: r2 - margin },
        }
    }

    /// Positive part of the constraint residual at the frame `f`.
    pub fn violation(&self, f: &DMatrix<f64>) -> f64 {
        match self {
            Self::AtMost { v, c } => ((f.transpose() * v).norm_squared() - c).max(0.0),
            Self::AtLeast { v, b } => (b - (f.transpose() * v).norm_squared()).max(0.0),
            Self::AngleBall { k, p, r2 } => {
                let w = Subspace::from_frame_unchecked(f.clone());
                let angles = principal_angles(&w, k).expect("same ambient dimension");
                if angles.len() < *p {
                    return f64::INFINITY;
                }
                (angles[..*p].iter().map(|a| a * a).sum::<f64>() - r2).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Feasibility {
    Feasible(Subspace),
    Infeasible,
    Undecided,
}

impl Feasibility {
    #[cfg(test)]
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible(_))
    }
}

/// Decides whether some `k`-dimensional subspace of `R^d` satisfies every
/// constraint. The answer is exact for line-functional constraints when `k`
/// is `1` or `d - 1`.
pub(crate) fn solve(d: usize, k: usize, constraints: &[Constraint]) -> Feasibility {
    if constraints.is_empty() || k == 0 || k == d {
        let w = if k == d { Subspace::full(d) } else { Subspace::coordinate(d, &(0..k).collect::<Vec<_>>()) };
        let ok = constraints.iter().all(|c| c.violation(w.frame()) <= SPHERE_TOL);
        return if ok { Feasibility::Feasible(w) } else { Feasibility::Infeasible };
    }
    if is_exact(d, k, constraints) {
        return solve_exact(d, k, constraints);
    }
    solve_descent(d, k, constraints)
}

/// Whether [`solve`] decides the system exactly.
pub(crate) fn is_exact(d: usize, k: usize, constraints: &[Constraint]) -> bool {
    (k == 1 || k + 1 == d) && constraints.iter().all(Constraint::is_line_functional)
}

#[derive(Debug, Clone)]
enum SphereConstraint {
    /// `|<a, w>| ≤ r`
    Slab { a: DVector<f64>, r: f64 },
    /// `|<a, w>| ≥ s`
    Band { a: DVector<f64>, s: f64 },
}

impl SphereConstraint {
    fn holds(&self, w: &DVector<f64>) -> bool {
        match self {
            Self::Slab { a, r } => a.dot(w).abs() <= r + SPHERE_TOL,
            Self::Band { a, s } => a.dot(w).abs() >= s - SPHERE_TOL,
        }
    }

    fn normal(&self) -> &DVector<f64> {
        match self {
            Self::Slab { a, .. } | Self::Band { a, .. } => a,
        }
    }

    fn offset(&self) -> f64 {
        match self {
            Self::Slab { r, .. } => *r,
            Self::Band { s, .. } => *s,
        }
    }
}

fn solve_exact(d: usize, k: usize, constraints: &[Constraint]) -> Feasibility {
    let hyperplane = k > 1;
    let mut sphere = Vec::with_capacity(constraints.len());
    for c in constraints {
        // on a hyperplane w^⊥, ‖π_W v‖² = 1 - <v, w>²
        let (v, value, upper) = match c {
            Constraint::AtMost { v, c } => (v, *c, true),
            Constraint::AtLeast { v, b } => (v, *b, false),
            Constraint::AngleBall { .. } => unreachable!("checked by is_exact"),
        };
        let (value, slab) = if hyperplane { (1.0 - value, !upper) } else { (value, upper) };
        if slab {
            if value < -SPHERE_TOL {
                return Feasibility::Infeasible;
            }
            if value < 1.0 {
                sphere.push(SphereConstraint::Slab { a: v.clone(), r: value.max(0.0).sqrt() });
            }
        } else {
            if value > 1.0 + SPHERE_TOL {
                return Feasibility::Infeasible;
            }
            if value > 0.0 {
                sphere.push(SphereConstraint::Band { a: v.clone(), s: value.min(1.0).sqrt() });
            }
        }
    }
    match sphere_point(d, &sphere) {
        Some(w) => {
            let line = Subspace::from_frame_unchecked(DMatrix::from_column_slice(d, 1, w.as_slice()));
            Feasibility::Feasible(if hyperplane { line.complement() } else { line })
        }
        None => Feasibility::Infeasible,
    }
}

/// Finds a unit vector satisfying all sphere constraints, if one exists.
///
/// A non-empty feasible set contains the minimiser of a generic linear
/// functional, which lies on some intersection of constraint hyperplanes
/// `<a, w> = ±r` and is either the single point of that affine subspace on
/// the sphere or the extreme point of the functional on the sub-sphere.
fn sphere_point(d: usize, constraints: &[SphereConstraint]) -> Option<DVector<f64>> {
    let generic = generic_directions(d);
    let feasible = |w: &DVector<f64>| constraints.iter().all(|c| c.holds(w));

    let mut hyperplanes: Vec<(usize, f64)> = Vec::new();
    for (i, c) in constraints.iter().enumerate() {
        let off = c.offset();
        hyperplanes.push((i, off));
        if off > 0.0 {
            hyperplanes.push((i, -off));
        }
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(d);
    let mut found = None;
    visit_subsets(&hyperplanes, constraints, d, 0, &mut chosen, &mut |normals, offsets| {
        for w in critical_points(d, normals, offsets, &generic) {
            if feasible(&w) {
                found = Some(w);
                return true;
            }
        }
        false
    });
    found
}

/// Depth-first enumeration of hyperplane subsets (at most one per
/// constraint, linearly independent normals); stops when `f` returns true.
fn visit_subsets(
    hyperplanes: &[(usize, f64)],
    constraints: &[SphereConstraint],
    d: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&DMatrix<f64>, &DVector<f64>) -> bool,
) -> bool {
    let normals = DMatrix::from_fn(chosen.len(), d, |r, c| constraints[hyperplanes[chosen[r]].0].normal()[c]);
    let offsets = DVector::from_iterator(chosen.len(), chosen.iter().map(|&h| hyperplanes[h].1));
    if f(&normals, &offsets) {
        return true;
    }
    if chosen.len() == d {
        return false;
    }
    for h in start..hyperplanes.len() {
        let owner = hyperplanes[h].0;
        if chosen.iter().any(|&c| hyperplanes[c].0 == owner) {
            continue;
        }
        chosen.push(h);
        let independent = {
            let n = DMatrix::from_fn(chosen.len(), d, |r, c| constraints[hyperplanes[chosen[r]].0].normal()[c]);
            let s = crate::linalg::singular_values(&n);
            s.last().is_some_and(|&x| x > 1e-9)
        };
        if independent && visit_subsets(hyperplanes, constraints, d, h + 1, chosen, f) {
            return true;
        }
        chosen.pop();
    }
    false
}

/// Candidate minimisers of the generic functionals on `{N w = c} ∩ S^{d-1}`.
fn critical_points(d: usize, n: &DMatrix<f64>, c: &DVector<f64>, generic: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let t = n.nrows();
    if t == 0 {
        return generic.iter().flat_map(|g| [g.clone(), -g]).collect();
    }
    let gram = n * n.transpose();
    let Some(inv) = gram.try_inverse() else { return Vec::new() };
    let w0 = n.transpose() * (&inv * c);
    let r2 = 1.0 - w0.norm_squared();
    if r2 < -1e-12 {
        return Vec::new();
    }
    if t == d || r2 <= 1e-14 {
        let norm = w0.norm();
        return if norm > 0.0 { vec![w0 / norm] } else { Vec::new() };
    }
    let proj = DMatrix::<f64>::identity(d, d) - n.transpose() * &inv * n;
    let rho = r2.sqrt();
    let mut out = Vec::with_capacity(2 * generic.len());
    for g in generic {
        let p = &proj * g;
        let norm = p.norm();
        if norm > 1e-9 {
            let step = p * (rho / norm);
            out.push(&w0 + &step);
            out.push(&w0 - step);
        }
    }
    out
}

fn generic_directions(d: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(GENERIC_SEED);
    (0..3).map(|_| random_frame(&mut rng, d, 1).column(0).into_owned()).collect()
}

fn total_violation(constraints: &[Constraint], f: &DMatrix<f64>) -> f64 {
    constraints.iter().map(|c| c.violation(f).powi(2)).sum()
}

const DESCENT_STARTS: usize = 24;
const DESCENT_ITERS: usize = 400;

fn solve_descent(d: usize, k: usize, constraints: &[Constraint]) -> Feasibility {
    let tight: Vec<Constraint> = constraints.iter().map(|c| c.tightened(TIGHTEN)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(GENERIC_SEED ^ ((d as u64) << 8 | k as u64));
    let starts: Vec<DMatrix<f64>> = (0..DESCENT_STARTS).map(|_| random_frame(&mut rng, d, k)).collect();

    for s in &starts {
        let f = descend(&tight, s.clone());
        if constraints.iter().all(|c| c.violation(&f) <= SPHERE_TOL) {
            return Feasibility::Feasible(Subspace::from_frame_unchecked(f));
        }
    }
    let best = starts
        .iter()
        .map(|s| total_violation(constraints, &descend(constraints, s.clone())))
        .fold(f64::INFINITY, f64::min);
    if best > TAU_FEAS {
        Feasibility::Infeasible
    } else {
        Feasibility::Undecided
    }
}

/// Gradient descent with Armijo backtracking on the squared violation, using
/// central differences in the tangent chart `F + F⊥ X` and QR retraction.
fn descend(constraints: &[Constraint], mut f: DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = f.shape();
    let objective = |f: &DMatrix<f64>| total_violation(constraints, f);
    let mut value = objective(&f);
    let h = 1e-7;
    for _ in 0..DESCENT_ITERS {
        if value == 0.0 {
            break;
        }
        let perp = Subspace::from_frame_unchecked(f.clone()).complement();
        let g = perp.frame();
        let mut grad = DMatrix::zeros(d - k, k);
        for a in 0..k {
            for b in 0..d - k {
                let mut dir = DMatrix::zeros(d, k);
                dir.set_column(a, &g.column(b));
                let plus = orthonormalize(&(&f + &dir * h));
                let minus = orthonormalize(&(&f - &dir * h));
                grad[(b, a)] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
        }
        let gnorm2 = grad.norm_squared();
        if gnorm2 < 1e-30 {
            break;
        }
        let step_dir = g * &grad;
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-12 {
            let cand = orthonormalize(&(&f - &step_dir * t));
            let v = objective(&cand);
            if v <= value - 1e-4 * t * gnorm2 {
                f = cand;
                value = v;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn slabs_on_the_circle() {
        // |w1| ≤ r and |w1 - w2|/√2 ≤ r/√2 meet on the circle iff r ≥ 1/√5
        let v1 = dvector![1.0, 0.0];
        let v3 = dvector![1.0, -1.0];
        for (r, expected) in [(0.44, false), (0.45, true)] {
            let cs = [Constraint::at_most(&v1, r * r), Constraint::at_most(&v3, r * r / 2.0)];
            assert_eq!(solve(2, 1, &cs).is_feasible(), expected, "r = {r}");
        }
    }

    #[test]
    fn bands_and_slabs_in_three_dimensions() {
        // a hyperplane w^⊥ with |w_j| ≤ a_j for all j exists iff Σ a_j² ≥ 1
        let e = |i: usize| DVector::from_fn(3, |r, _| if r == i { 1.0 } else { 0.0 });
        for (a, expected) in [(0.57, false), (0.58, true)] {
            let cs: Vec<_> = (0..3).map(|i| Constraint::at_least(&e(i), 1.0 - a * a)).collect();
            let res = solve(3, 2, &cs);
            assert_eq!(res.is_feasible(), expected, "a = {a}");
            if let Feasibility::Feasible(w) = res {
                assert_eq!(w.dim(), 2);
                assert!(cs.iter().all(|c| c.violation(w.frame()) <= 1e-12));
            }
        }
    }

    #[test]
    fn descent_finds_planes_in_four_dimensions() {
        let e = |i: usize| DVector::from_fn(4, |r, _| if r == i { 1.0 } else { 0.0 });
        let easy = [Constraint::at_most(&e(0), 0.1), Constraint::at_most(&e(1), 0.1)];
        assert!(solve(4, 2, &easy).is_feasible());
        // Σ_j ‖π_W e_j‖² = 2 for a plane, so all four below 0.4 is impossible
        let hard: Vec<_> = (0..4).map(|i| Constraint::at_most(&e(i), 0.4)).collect();
        assert!(matches!(solve(4, 2, &hard), Feasibility::Infeasible));
    }

    #[test]
    fn trivial_systems() {
        assert!(solve(3, 0, &[]).is_feasible());
        assert!(solve(3, 3, &[]).is_feasible());
        let v = dvector![1.0, 0.0, 0.0];
        assert!(matches!(solve(3, 3, &[Constraint::at_most(&v, 0.5)]), Feasibility::Infeasible));
    }
}
