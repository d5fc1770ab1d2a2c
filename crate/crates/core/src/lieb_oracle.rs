//! Numerical evaluation of localized, regularized Brascamp-Lieb constants as
//! a supremum of the Gaussian functional
//! `(∏_j det(A_j)^{q_j} / det(T + Σ_j q_j l_j^T A_j l_j))^{1/2}` over
//! `0 < A_j ≤ R_j`, and limit schedules `T → 0`, `R → ∞`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::datum::{weighted_gram, Datum, LocalizedRegularizedDatum};
use crate::error::{invalid, Result};
use crate::linalg::SpdMatrix;

/// Tolerance for `A_j ≤ R_j`, relative to `max(1, ‖R_j‖)`.
pub const TAU_LOEWNER: f64 = 1e-8;

/// Number of consecutive small relative changes that count as convergence.
const STALL_WINDOW: usize = 5;

/// Eigenvalue floor keeping iterates strictly positive definite.
const EIG_FLOOR: f64 = 1e-200;

const MAX_EIGEN_SWEEPS: usize = 10_000;

/// Largest extrapolation step along the geodesic.
const MAX_STEP: f64 = 1024.0;

/// Smallest damping step tried before an iteration is declared stationary.
const MIN_STEP: f64 = 1e-12;

/// One positive definite matrix `A_j` per map.
#[derive(Debug, Clone)]
pub struct GaussianInput {
    mats: Vec<SpdMatrix>,
}

impl GaussianInput {
    pub fn new(mats: Vec<SpdMatrix>) -> Result<Self> {
        if mats.iter().any(SpdMatrix::is_semidefinite) {
            return invalid("Gaussian inputs must be strictly positive definite");
        }
        Ok(Self { mats })
    }

    /// `A_j = s I` for every map.
    pub fn isotropic(datum: &Datum, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("scale must be positive, got {s}"));
        }
        Self::new(datum.target_dims().into_iter().map(|k| SpdMatrix::scaled_identity(k, s)).collect())
    }

    pub fn mats(&self) -> &[SpdMatrix] {
        &self.mats
    }

    fn from_raw(raw: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(raw.into_iter().map(SpdMatrix::new).collect::<Result<_>>()?)
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    pub argmax: GaussianInput,
    pub iterations: usize,
    pub converged: bool,
    /// Functional value after every accepted iterate, starting with the
    /// initial point.
    pub functional_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub max_iter: usize,
    /// Initial step along the geodesic from `A` to the fixed-point update;
    /// steps are halved until the functional does not decrease, then doubled
    /// while it increases.
    pub damping: f64,
    pub tol_rel: f64,
    pub seed: u64,
    /// Additional random positive definite starting points.
    pub restarts: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { max_iter: 5000, damping: 1.0, tol_rel: 1e-10, seed: 0, restarts: 2 }
    }
}

impl OracleOptions {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return invalid(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tol_rel > 0.0) {
            return invalid(format!("tol_rel must be positive, got {}", self.tol_rel));
        }
        Ok(())
    }
}

/// Symmetric eigendecomposition with a bounded number of sweeps; `None` for
/// non-finite input or when the iteration does not settle.
fn eigen(m: &DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    SymmetricEigen::try_new(symmetrize(m.clone()), f64::EPSILON, MAX_EIGEN_SWEEPS)
}

fn log_det(m: &DMatrix<f64>) -> f64 {
    match eigen(m) {
        Some(eig) if eig.eigenvalues.iter().all(|&x| x > 0.0) => eig.eigenvalues.iter().map(|x| x.ln()).sum(),
        _ => f64::NEG_INFINITY,
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `V f(Λ) V^T` for a symmetric `m`; all entries are NaN when the
/// decomposition fails.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let Some(eig) = eigen(m) else {
        return DMatrix::from_element(m.nrows(), m.ncols(), f64::NAN);
    };
    let v = &eig.eigenvectors;
    let lam = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&x| f(x)));
    symmetrize(v * DMatrix::from_diagonal(&lam) * v.transpose())
}

/// `s ↦ A^{1/2} (A^{-1/2} B A^{-1/2})^s A^{1/2}` for each map, the
/// positive definite geodesic through `A` (at 0) and `B` (at 1).
struct Geodesic {
    sqrt_a: Vec<DMatrix<f64>>,
    log_g: Vec<DMatrix<f64>>,
}

impl Geodesic {
    fn new(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Self {
        let (sqrt_a, log_g) = a
            .iter()
            .zip(b)
            .map(|(a, b)| {
                let inv_sqrt = spectral_map(a, |x| x.max(EIG_FLOOR).sqrt().recip());
                let g = &inv_sqrt * b * &inv_sqrt;
                (spectral_map(a, |x| x.max(EIG_FLOOR).sqrt()), spectral_map(&g, |x| x.max(EIG_FLOOR).ln()))
            })
            .unzip();
        Self { sqrt_a, log_g }
    }

    fn at(&self, s: f64) -> Vec<DMatrix<f64>> {
        self.sqrt_a
            .iter()
            .zip(&self.log_g)
            .map(|(r, l)| symmetrize(r * spectral_map(l, |x| (s * x).exp()) * r))
            .collect()
    }
}

/// The optimisation problem for a fixed `(D, R, T)`, with the square roots
/// of the regularisers cached for the clipping step.
struct Problem<'a> {
    lrd: &'a LocalizedRegularizedDatum,
    sqrt_r: Vec<DMatrix<f64>>,
    inv_sqrt_r: Vec<DMatrix<f64>>,
}

impl<'a> Problem<'a> {
    fn new(lrd: &'a LocalizedRegularizedDatum) -> Self {
        let sqrt_r = lrd.regs().iter().map(|r| spectral_map(r.matrix(), f64::sqrt)).collect();
        let inv_sqrt_r = lrd.regs().iter().map(|r| spectral_map(r.matrix(), |x| x.sqrt().recip())).collect();
        Self { lrd, sqrt_r, inv_sqrt_r }
    }

    fn gram(&self, a: &[DMatrix<f64>]) -> DMatrix<f64> {
        let refs: Vec<&DMatrix<f64>> = a.iter().collect();
        weighted_gram(self.lrd.datum(), &refs, self.lrd.loc().matrix())
    }

    fn log_value(&self, a: &[DMatrix<f64>]) -> f64 {
        let num: f64 = a.iter().zip(self.lrd.datum().weights()).map(|(a, q)| q * log_det(a)).sum();
        0.5 * (num - log_det(&self.gram(a)))
    }

    /// Projection of `a` onto `EIG_FLOOR ≤ A ≤ R_j` in the coordinates
    /// whitened by `R_j`.
    fn clip(&self, j: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let b = &self.inv_sqrt_r[j] * a * &self.inv_sqrt_r[j];
        let b = spectral_map(&b, |x| x.clamp(EIG_FLOOR, 1.0));
        symmetrize(&self.sqrt_r[j] * b * &self.sqrt_r[j])
    }

    /// Fixed-point map `A_j ← (l_j M^{-1} l_j^T)^{-1}`, clipped below `R_j`.
    fn update(&self, a: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let m_inv = spectral_map(&self.gram(a), |x| x.max(EIG_FLOOR).recip());
        self.lrd
            .datum()
            .maps()
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let s = l.matrix() * &m_inv * l.matrix().transpose();
                self.clip(j, &spectral_map(&s, |x| x.max(EIG_FLOOR).recip()))
            })
            .collect()
    }

    fn initial(&self) -> Vec<DMatrix<f64>> {
        self.lrd
            .regs()
            .iter()
            .map(|r| DMatrix::identity(r.dim(), r.dim()) * r.min_eigenvalue().min(1.0))
            .collect()
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
        self.lrd
            .regs()
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let k = r.dim();
                let g = DMatrix::<f64>::from_fn(k, k, |_, _| StandardNormal.sample(rng));
                let scale: f64 = StandardNormal.sample(rng);
                let a = (&g * g.transpose() / k as f64 + DMatrix::identity(k, k) * 0.1) * scale.exp();
                self.clip(j, &a)
            })
            .collect()
    }

    /// Clipped candidate, or `None` when the step overflowed.
    fn clip_all(&self, a: Vec<DMatrix<f64>>) -> Option<Vec<DMatrix<f64>>> {
        if a.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return None;
        }
        Some(a.iter().enumerate().map(|(j, m)| self.clip(j, m)).collect())
    }

    /// Line search over a common scalar multiple `c A`, doubling or halving
    /// `c` while the functional increases.
    fn rescale(&self, a: &mut Vec<DMatrix<f64>>, f: &mut f64) {
        for factor in [2.0, 0.5] {
            let mut moved = false;
            loop {
                let cand: Vec<DMatrix<f64>> = a.iter().enumerate().map(|(j, m)| self.clip(j, &(m * factor))).collect();
                let fc = self.log_value(&cand);
                if fc <= *f {
                    break;
                }
                *a = cand;
                *f = fc;
                moved = true;
            }
            if moved {
                return;
            }
        }
    }

    fn ascend(&self, start: Vec<DMatrix<f64>>, opts: &OracleOptions) -> (Vec<DMatrix<f64>>, f64, usize, bool, Vec<f64>) {
        let mut a = start;
        let mut f = self.log_value(&a);
        let mut trace = vec![f.exp()];
        let mut quiet = 0;
        let mut iterations = 0;
        while iterations < opts.max_iter && quiet < STALL_WINDOW {
            iterations += 1;
            let target = self.update(&a);
            let path = Geodesic::new(&a, &target);
            let mut step = opts.damping;
            let mut accepted: Option<(Vec<DMatrix<f64>>, f64)> = None;
            while step >= MIN_STEP {
                if let Some(cand) = self.clip_all(path.at(step)) {
                    let fc = self.log_value(&cand);
                    if fc >= f {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                step *= 0.5;
            }
            if let Some((_, mut best)) = accepted.clone() {
                while step < MAX_STEP {
                    step *= 2.0;
                    let Some(cand) = self.clip_all(path.at(step)) else { break };
                    let fc = self.log_value(&cand);
                    if fc <= best {
                        break;
                    }
                    best = fc;
                    accepted = Some((cand, fc));
                }
            }
            let before = f;
            if let Some((cand, fc)) = accepted {
                a = cand;
                f = fc;
            }
            self.rescale(&mut a, &mut f);
            if f > before {
                trace.push(f.exp());
            }
            let change = (f - before).exp_m1().abs();
            quiet = if change < opts.tol_rel { quiet + 1 } else { 0 };
        }
        (a, f, iterations, quiet >= STALL_WINDOW, trace)
    }

    fn result(&self, start: Vec<DMatrix<f64>>, opts: &OracleOptions) -> Result<OracleResult> {
        let (a, f, iterations, converged, functional_trace) = self.ascend(start, opts);
        Ok(OracleResult { value: f.exp(), argmax: GaussianInput::from_raw(a)?, iterations, converged, functional_trace })
    }
}

fn check_input(lrd: &LocalizedRegularizedDatum, a: &GaussianInput) -> Result<()> {
    let datum = lrd.datum();
    if a.mats.len() != datum.len() {
        return invalid(format!("{} Gaussian inputs for {} maps", a.mats.len(), datum.len()));
    }
    for (j, ((a, r), l)) in a.mats.iter().zip(lrd.regs()).zip(datum.maps()).enumerate() {
        if a.dim() != l.rows() {
            return invalid(format!("A_{j} has dimension {}, expected {}", a.dim(), l.rows()));
        }
        let gap = eigen(&(r.matrix() - a.matrix())).map_or(f64::NAN, |e| e.eigenvalues.min());
        if !(gap >= -TAU_LOEWNER * r.max_eigenvalue().max(1.0)) {
            return invalid(format!("A_{j} exceeds R_{j} (smallest eigenvalue of R - A is {gap:e})"));
        }
    }
    Ok(())
}

/// `(∏_j det(A_j)^{q_j} / det(T + Σ_j q_j l_j^T A_j l_j))^{1/2}`, evaluated in
/// log-space.
pub fn lieb_functional(lrd: &LocalizedRegularizedDatum, a: &GaussianInput) -> Result<f64> {
    check_input(lrd, a)?;
    let raw: Vec<DMatrix<f64>> = a.mats.iter().map(|m| m.matrix().clone()).collect();
    Ok(Problem::new(lrd).log_value(&raw).exp())
}

/// Damped fixed-point ascent from `A_j = min(1, λ_min(R_j)) I` and from
/// `opts.restarts` seeded random points; returns the best run.
pub fn maximize_gaussian(lrd: &LocalizedRegularizedDatum, opts: &OracleOptions) -> Result<OracleResult> {
    opts.validate()?;
    let problem = Problem::new(lrd);
    let starts: Vec<Vec<DMatrix<f64>>> = std::iter::once(problem.initial())
        .chain((0..opts.restarts).map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64);
            problem.random_start(&mut rng)
        }))
        .collect();
    let runs: Vec<Result<OracleResult>> = starts.into_par_iter().map(|s| problem.result(s, opts)).collect();
    let mut best: Option<OracleResult> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Damped fixed-point ascent from a given feasible starting point.
pub fn maximize_from(lrd: &LocalizedRegularizedDatum, start: &GaussianInput, opts: &OracleOptions) -> Result<OracleResult> {
    opts.validate()?;
    check_input(lrd, start)?;
    let problem = Problem::new(lrd);
    let raw = start.mats.iter().enumerate().map(|(j, m)| problem.clip(j, m.matrix())).collect();
    problem.result(raw, opts)
}

/// Regulariser scales `R_j = t I` (increasing) and localiser scales `T = ε I`
/// (decreasing).
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    t_values: Vec<f64>,
    eps_values: Vec<f64>,
}

impl Schedule {
    pub fn new(t_values: Vec<f64>, eps_values: Vec<f64>) -> Result<Self> {
        let positive = |xs: &[f64]| !xs.is_empty() && xs.iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive(&t_values) || !positive(&eps_values) {
            return invalid("schedule values must be positive and finite");
        }
        if t_values.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("t values must be strictly increasing");
        }
        if eps_values.windows(2).any(|w| w[1] >= w[0]) {
            return invalid("epsilon values must be strictly decreasing");
        }
        Ok(Self { t_values, eps_values })
    }

    /// `t ∈ {1, 10, …, 10^t_decades}` and `ε ∈ {1, 10^-1, …, 10^-eps_decades}`.
    pub fn decades(t_decades: u32, eps_decades: u32) -> Self {
        Self {
            t_values: (0..=t_decades).map(|k| 10f64.powi(k as i32)).collect(),
            eps_values: (0..=eps_decades).map(|k| 10f64.powi(-(k as i32))).collect(),
        }
    }

    pub fn t_values(&self) -> &[f64] {
        &self.t_values
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps_values
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::decades(6, 6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePoint {
    pub t: f64,
    pub eps: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LimitEstimate {
    /// Oracle value at the last schedule point.
    pub estimate: f64,
    /// Two-point extrapolation in `ε` at the largest `t`, assuming an error
    /// linear in `ε`.
    pub extrapolated: f64,
    /// Points in schedule order: `t` outer, `ε` inner.
    pub trace: Vec<SchedulePoint>,
}

impl LimitEstimate {
    /// Whether every point converged.
    pub fn converged(&self) -> bool {
        self.trace.iter().all(|p| p.converged)
    }
}

/// Evaluates the oracle along the schedule with `R_j = t I`, `T = ε I`.
/// Every point is warm-started from the better of its two predecessors in
/// `t` and in `ε`, so the trace is monotone in both directions.
pub fn bl_limit(datum: &Datum, schedule: &Schedule, opts: &OracleOptions) -> Result<LimitEstimate> {
    opts.validate()?;
    let n_eps = schedule.eps_values.len();
    let mut trace = Vec::with_capacity(schedule.t_values.len() * n_eps);
    let mut previous_row: Vec<Vec<DMatrix<f64>>> = Vec::new();
    for &t in &schedule.t_values {
        let mut row: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n_eps);
        for (k, &eps) in schedule.eps_values.iter().enumerate() {
            let lrd = LocalizedRegularizedDatum::isotropic(datum.clone(), t, eps)?;
            let problem = Problem::new(&lrd);
            let candidates: Vec<&Vec<DMatrix<f64>>> = previous_row.get(k).into_iter().chain(row.last()).collect();
            let (a, f, iterations, converged, _) = if candidates.is_empty() {
                let fresh = maximize_gaussian(&lrd, opts)?;
                let raw = fresh.argmax.mats.iter().map(|m| m.matrix().clone()).collect();
                (raw, fresh.value.ln(), fresh.iterations, fresh.converged, Vec::new())
            } else {
                let start = candidates
                    .into_iter()
                    .map(|c| c.iter().enumerate().map(|(j, m)| problem.clip(j, m)).collect::<Vec<_>>())
                    .max_by(|x, y| problem.log_value(x).total_cmp(&problem.log_value(y)))
                    .expect("non-empty");
                problem.ascend(start, opts)
            };
            trace.push(SchedulePoint { t, eps, value: f.exp(), iterations, converged });
            row.push(a);
        }
        previous_row = row;
    }
    let estimate = trace.last().expect("non-empty schedule").value;
    let extrapolated = match trace.len() {
        _ if n_eps < 2 => estimate,
        n => {
            let (prev, last) = (&trace[n - 2], &trace[n - 1]);
            last.value + (last.value - prev.value) * last.eps / (prev.eps - last.eps)
        }
    };
    Ok(LimitEstimate { estimate, extrapolated, trace })
}

/// `∏_j ((1-q_j)^{1-q_j} / q_j^{q_j})^{1/2}`, the constant of the Young
/// datum `(x, y, x - y)` with weights summing to two.
pub fn young_constant(q: [f64; 3]) -> f64 {
    q.iter().map(|&q| ((1.0 - q) * (1.0 - q).ln() - q * q.ln()) * 0.5).sum::<f64>().exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearMap;

    fn identity(d: usize) -> Datum {
        Datum::new(vec![LinearMap::identity(d).unwrap()], vec![1.0]).unwrap()
    }

    #[test]
    fn functional_examples() {
        for eps in [1e-2, 1e-4, 1e-8] {
            let lrd = LocalizedRegularizedDatum::isotropic(identity(3), 1.0, eps).unwrap();
            let a = GaussianInput::isotropic(lrd.datum(), 1.0).unwrap();
            let v = lieb_functional(&lrd, &a).unwrap();
            assert!((v - (1.0 + eps).powf(-1.5)).abs() < 1e-12);

            let lw = LocalizedRegularizedDatum::isotropic(Datum::loomis_whitney().unwrap(), 1.0, eps).unwrap();
            let a = GaussianInput::isotropic(lw.datum(), 1.0).unwrap();
            let v = lieb_functional(&lw, &a).unwrap();
            assert!((v - (1.0 + eps).powf(-1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn functional_rejects_inputs_above_regulariser() {
        let lrd = LocalizedRegularizedDatum::isotropic(identity(2), 1.0, 1.0).unwrap();
        let a = GaussianInput::isotropic(lrd.datum(), 2.0).unwrap();
        assert!(lieb_functional(&lrd, &a).is_err());
        let a = GaussianInput::isotropic(&identity(3), 0.5).unwrap();
        assert!(lieb_functional(&lrd, &a).is_err());
    }

    #[test]
    fn young_oracle_matches_closed_form() {
        let q = [2.0 / 3.0; 3];
        let expected = young_constant(q);
        assert!((expected - 3f64.sqrt() / 2.0).abs() < 1e-12);
        let lrd = LocalizedRegularizedDatum::isotropic(Datum::young(q).unwrap(), 1e6, 1e-8).unwrap();
        let r = maximize_gaussian(&lrd, &OracleOptions::default()).unwrap();
        assert!((r.value - expected).abs() < 1e-4, "{}", r.value);
        assert!(r.functional_trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn distorted_loomis_whitney_oracle() {
        for lambda in [1.0, 0.25] {
            let lrd =
                LocalizedRegularizedDatum::isotropic(Datum::distorted_loomis_whitney(lambda).unwrap(), 1e6, 1e-6).unwrap();
            let r = maximize_gaussian(&lrd, &OracleOptions::default()).unwrap();
            assert!((r.value / lambda.powf(-0.5) - 1.0).abs() < 1e-2, "{lambda}: {}", r.value);
        }
    }

    #[test]
    fn limit_of_identity_is_one() {
        let est = bl_limit(&identity(2), &Schedule::decades(3, 4), &OracleOptions::default()).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-3);
        assert!((est.extrapolated - 1.0).abs() < 1e-4);
        assert_eq!(est.trace.len(), 20);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(Schedule::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(Schedule::new(vec![], vec![1.0]).is_err());
        assert_eq!(Schedule::default().t_values().len(), 7);
    }
}
