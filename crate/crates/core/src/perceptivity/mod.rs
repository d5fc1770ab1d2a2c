//! Metric perceptivity: deciding whether `A_α(D | W) ≥ dim W - β` for every
//! subspace `W`.
//!
//! A [`PerceptivityVerdict`] is `Certified` only when an exact procedure
//! covered the whole Grassmannian; searches that find no violation report
//! `Unknown` together with the smallest slack they observed.

mod exact;
mod feasible;
mod search;

use std::fmt;

use crate::datum::{essential_acuity, is_globally_critical, Datum};
use crate::error::{invalid, Error, Result};
use crate::linalg::{principal_angles, Subspace};

pub use exact::D_MAX_EXACT;
pub use feasible::TAU_FEAS;

use exact::Model;
use feasible::{Constraint, Feasibility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Certified,
    Refuted,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Certified => "CERTIFIED",
            Self::Refuted => "REFUTED",
            Self::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Enumeration,
    RankOneExact,
    SufficientCondition,
    RandomizedSearch,
}

impl Method {
    pub fn is_exact(self) -> bool {
        !matches!(self, Self::RandomizedSearch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Enumeration => "enumeration",
            Self::RankOneExact => "rank-one-exact",
            Self::SufficientCondition => "sufficient-condition",
            Self::RandomizedSearch => "randomized-search",
        })
    }
}

/// Outcome of a perceptivity query at thresholds `alphas` and defect `beta`.
#[derive(Debug, Clone)]
pub struct PerceptivityVerdict {
    pub status: Status,
    /// A subspace violating the inequality, present exactly when refuted.
    pub witness: Option<Subspace>,
    /// Smallest slack `A_α(D | W) - dim W + β` observed (a lower bound on the
    /// true minimum for exact methods).
    pub min_slack: f64,
    pub method: Method,
    pub samples_used: usize,
    pub alphas: Vec<f64>,
    pub beta: f64,
}

impl PerceptivityVerdict {
    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    /// Whether a certificate at the verdict's parameters implies
    /// `(alphas, beta)`-perceptivity: smaller thresholds and a larger defect
    /// only make the inequality easier.
    pub fn covers(&self, alphas: &[f64], beta: f64) -> bool {
        alphas.len() == self.alphas.len()
            && alphas.iter().zip(&self.alphas).all(|(a, v)| a <= v)
            && beta >= self.beta
    }
}

/// Parameters of the Grassmannian search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub sweeps: usize,
    /// Number of rotation angles tried per coordinate pair.
    pub angles: usize,
    pub seed: u64,
    pub lattice_cap: usize,
    /// Use the exact low-dimensional engine when it applies.
    pub exact: bool,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 64, sweeps: 20, angles: 32, seed: 0, lattice_cap: 256, exact: true }
    }
}

/// `τ_slack = 1e-9 (1 + Σ q_j)`.
pub fn slack_tolerance(datum: &Datum) -> f64 {
    1e-9 * (1.0 + datum.weight_sum())
}

/// `A_α(D | W) - dim W + β`.
pub fn slack(datum: &Datum, alphas: &[f64], beta: f64, w: &Subspace) -> Result<f64> {
    Ok(essential_acuity(datum, alphas, w)? - w.dim() as f64 + beta)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return invalid(format!("beta must be finite and non-negative, got {beta}"));
    }
    Ok(())
}

struct Query<'a> {
    datum: &'a Datum,
    alphas: &'a [f64],
    beta: f64,
}

impl Query<'_> {
    fn verdict(&self, status: Status, witness: Option<Subspace>, min_slack: f64, method: Method, samples: usize) -> PerceptivityVerdict {
        PerceptivityVerdict {
            status,
            witness,
            min_slack,
            method,
            samples_used: samples,
            alphas: self.alphas.to_vec(),
            beta: self.beta,
        }
    }

    fn from_exact(&self, out: exact::ExactOutcome, method: Method) -> PerceptivityVerdict {
        let tau = slack_tolerance(self.datum);
        match out.refutation {
            Some((w, _)) => self.verdict(Status::Refuted, Some(w), out.min_slack, method, out.samples),
            None if out.decided && out.min_slack >= -tau => {
                self.verdict(Status::Certified, None, out.min_slack, method, out.samples)
            }
            None => self.verdict(Status::Unknown, None, out.min_slack, method, out.samples),
        }
    }
}

/// Decides `(alphas, beta)`-perceptivity. In dimension at most
/// [`D_MAX_EXACT`] an exact enumeration may certify or refute; otherwise, or
/// when it is inconclusive, a randomized search may refute but never certifies.
pub fn check_perceptivity(datum: &Datum, alphas: &[f64], beta: f64, budget: &SearchBudget) -> Result<PerceptivityVerdict> {
    datum.check_alphas(alphas)?;
    check_beta(beta)?;
    let query = Query { datum, alphas, beta };
    let mut samples = 0;
    if budget.exact && exact::applicable(datum) {
        let rank_one: Vec<Model> = datum.maps().iter().map(Model::rank_one).collect();
        let exact_rank_one =
            rank_one.iter().zip(datum.maps()).all(|(m, l)| m.margin() <= crate::linalg::rank_tolerance(l.norm()));
        let (models, method) = if exact_rank_one {
            (rank_one, Method::RankOneExact)
        } else {
            (datum.maps().iter().map(Model::fit).collect(), Method::Enumeration)
        };
        let out = exact::run(datum, alphas, beta, &models, slack_tolerance(datum))?;
        let verdict = query.from_exact(out, method);
        if verdict.status != Status::Unknown {
            return Ok(verdict);
        }
        samples = verdict.samples_used;
    }
    let found = search::search(datum, alphas, beta, budget)?;
    samples += found.samples;
    let status = if found.min_slack < -slack_tolerance(datum) { Status::Refuted } else { Status::Unknown };
    let witness = (status == Status::Refuted).then_some(found.witness);
    Ok(query.verdict(status, witness, found.min_slack, Method::RandomizedSearch, samples))
}

/// Exact decision for data made of rank-one maps `σ_j u_j v_j^T`: a map
/// counts within `W` iff `σ_j ‖π_W v_j‖ > α_j`, so only activation patterns
/// need to be enumerated.
pub fn rank_one_exact_check(datum: &Datum, alphas: &[f64], beta: f64) -> Result<PerceptivityVerdict> {
    datum.check_alphas(alphas)?;
    check_beta(beta)?;
    let d = datum.ambient_dim();
    if d > D_MAX_EXACT {
        return Err(Error::UnsupportedDimension { dim: d, max: D_MAX_EXACT });
    }
    let models: Vec<Model> = datum.maps().iter().map(Model::rank_one).collect();
    for (j, (m, l)) in models.iter().zip(datum.maps()).enumerate() {
        if m.margin() > crate::linalg::rank_tolerance(l.norm()) {
            return invalid(format!("map {j} is not of rank one (second singular value {:e})", m.margin()));
        }
    }
    if !exact::applicable(datum) {
        return invalid("too many maps for exhaustive enumeration");
    }
    let out = exact::run(datum, alphas, beta, &models, slack_tolerance(datum))?;
    Ok(Query { datum, alphas, beta }.from_exact(out, Method::RankOneExact))
}

/// Checks the sufficient condition for data of orthogonal projections:
/// for every `W`,
/// `Σ_j q_j max_{W' ∈ B_{Cα_j}(W)} dim(K_j ∩ W') - β ≤ dim W Σ_j q_j dim K_j / d`
/// with `K_j` the kernels. The inner maximum equals the largest `p` with
/// `θ_1² + … + θ_p² ≤ (Cα_j)²` over the principal angles between `W` and
/// `K_j`, so only finitely many dimension patterns need to be decided.
///
/// The conclusion is only as good as the metric constant `c_metric`.
pub fn projector_sufficient_check(datum: &Datum, alphas: &[f64], beta: f64, c_metric: f64) -> Result<PerceptivityVerdict> {
    datum.check_alphas(alphas)?;
    check_beta(beta)?;
    if !(c_metric >= 1.0 && c_metric.is_finite()) {
        return invalid(format!("metric constant must be at least 1, got {c_metric}"));
    }
    if !datum.is_projector_datum() {
        return invalid("the sufficient condition needs a datum of orthogonal projections");
    }
    let (critical, defect) = is_globally_critical(datum);
    if !critical {
        return invalid(format!("the sufficient condition needs a globally critical datum (defect {defect:e})"));
    }
    if let Some(a) = alphas.iter().find(|&&a| a * c_metric >= 1.0) {
        return invalid(format!("thresholds must lie below 1/C, got {a}"));
    }
    let query = Query { datum, alphas, beta };
    let d = datum.ambient_dim();
    if beta >= d as f64 {
        return Ok(query.verdict(Status::Certified, None, beta - d as f64, Method::SufficientCondition, 0));
    }
    if d > D_MAX_EXACT {
        return Ok(query.verdict(Status::Unknown, None, f64::NAN, Method::SufficientCondition, 0));
    }

    let tau = slack_tolerance(datum);
    let q = datum.weights();
    let kernels: Vec<Subspace> = datum.maps().iter().map(|l| l.kernel()).collect();
    let share: f64 = kernels.iter().zip(q).map(|(k, q)| q * k.dim() as f64).sum::<f64>() / d as f64;
    let radii: Vec<f64> = alphas.iter().map(|a| a * c_metric).collect();

    let mut min_slack = f64::INFINITY;
    let mut samples = 0;
    let mut conclusive = true;
    for k in 1..=d {
        let ranges: Vec<usize> = kernels.iter().map(|kj| kj.dim().min(k)).collect();
        let mut patterns = all_patterns(&ranges);
        patterns.sort_by(|a, b| weighted(a, q).total_cmp(&weighted(b, q)).then_with(|| a.cmp(b)));
        // most unbalanced first: the first realisable pattern gives the minimum
        for p in patterns.iter().rev() {
            let balance = k as f64 * share - weighted(p, q) + beta;
            samples += 1;
            let feasible = if k == d {
                p.iter().zip(&kernels).all(|(pj, kj)| *pj <= kj.dim())
            } else {
                let constraints = p
                    .iter()
                    .zip(&kernels)
                    .zip(&radii)
                    .filter(|((pj, _), _)| **pj > 0)
                    .filter_map(|((pj, kj), r)| ball_constraint(d, k, kj, *pj, *r))
                    .collect::<Vec<_>>();
                match feasible::solve(d, k, &constraints) {
                    Feasibility::Feasible(_) => true,
                    Feasibility::Infeasible => false,
                    Feasibility::Undecided => {
                        if balance < -tau {
                            conclusive = false;
                        }
                        continue;
                    }
                }
            };
            if feasible {
                min_slack = min_slack.min(balance);
                break;
            }
        }
    }
    let status = if conclusive && min_slack >= -tau { Status::Certified } else { Status::Unknown };
    Ok(query.verdict(status, None, min_slack, Method::SufficientCondition, samples))
}

fn weighted(p: &[usize], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(p, q)| *p as f64 * q).sum()
}

fn all_patterns(ranges: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &r in ranges {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..=r).map(move |x| {
                    let mut p = p.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// Constraint "some `W'` within distance `r` of `W` meets `K` in dimension
/// `p`", or `None` when it always holds.
fn ball_constraint(d: usize, k: usize, kernel: &Subspace, p: usize, r: f64) -> Option<Constraint> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if kernel.dim() == 1 {
        let u = kernel.frame().column(0).into_owned();
        return (r < half_pi).then(|| Constraint::at_least(&u, r.cos().powi(2)));
    }
    if kernel.dim() + 1 == d {
        // k - 1 principal angles with a hyperplane vanish; the last has sine ‖π_W h‖
        if p < k {
            return None;
        }
        let h = kernel.complement().frame().column(0).into_owned();
        return (r < half_pi).then(|| Constraint::at_most(&h, r.sin().powi(2)));
    }
    if r * r >= p as f64 * half_pi * half_pi {
        return None;
    }
    Some(Constraint::AngleBall { k: kernel.clone(), p, r2: r * r })
}

/// Lower estimate of `β_min = sup_W (dim W - A_0(D | W))` with a maximising
/// subspace. Exact whenever the low-dimensional engine decides the
/// `(0, 0)` query.
pub fn beta_min_estimate(datum: &Datum, budget: &SearchBudget) -> Result<(f64, Subspace)> {
    let d = datum.ambient_dim();
    let zeros = vec![0.0; datum.len()];
    let mut best = (0.0, Subspace::zero(d));
    let consider = |best: &mut (f64, Subspace), w: Subspace| -> Result<()> {
        let defect = -slack(datum, &zeros, 0.0, &w)?;
        if defect > best.0 + 1e-12 || (defect >= best.0 - 1e-12 && w.dim() < best.1.dim() && defect > 0.0) {
            *best = (defect, w);
        }
        Ok(())
    };
    if budget.exact && exact::applicable(datum) {
        let models: Vec<Model> = datum.maps().iter().map(Model::fit).collect();
        let out = exact::run(datum, &zeros, 0.0, &models, slack_tolerance(datum))?;
        if let Some((w, _)) = out.refutation {
            consider(&mut best, w)?;
        }
    }
    for w in search::candidate_lattice(datum, &zeros, budget.lattice_cap)? {
        consider(&mut best, w)?;
    }
    let found = search::search(datum, &zeros, 0.0, budget)?;
    consider(&mut best, found.witness)?;
    Ok(best)
}

/// Largest `p` such that some `W'` at principal-angle distance at most `r`
/// from `w` meets `k` in dimension `p`.
pub fn ball_intersection_dim(w: &Subspace, k: &Subspace, r: f64) -> Result<usize> {
    let angles = principal_angles(w, k)?;
    let mut acc = 0.0;
    let mut p = 0;
    for a in angles {
        acc += a * a;
        if acc > r * r + 1e-15 {
            break;
        }
        p += 1;
    }
    Ok(p)
}
