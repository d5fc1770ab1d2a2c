//! Explicit upper and lower bounds for Brascamp-Lieb constants, and the
//! greedy index-set construction behind the localized upper bound.
//!
//! Bounds are evaluated in log-space. A report whose hypotheses fail carries
//! [`BoundValue::Infinite`] naming the failed hypothesis instead of a number.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::datum::{
    exponential_entropy, gram_norm, is_globally_critical, log_exponential_entropy, projector_reduction,
    total_acuity, Datum, LocalizedRegularizedDatum,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{essential_rank, essential_rank_restricted, SpdMatrix, Subspace};
use crate::perceptivity::{PerceptivityVerdict, Status};

/// Tolerance used when re-verifying greedy certificates.
pub const TAU_GREEDY: f64 = 1e-9;

/// Relative slack of the greedy inclusion test `dist ≥ 1/√d`.
const GREEDY_INCLUSION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    UpperGlobal,
    UpperVariant,
    LowerGlobal,
    UpperLocalized,
    LowerLocalized,
}

impl BoundKind {
    pub fn is_upper(self) -> bool {
        matches!(self, Self::UpperGlobal | Self::UpperVariant | Self::UpperLocalized)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UpperGlobal => "UPPER_GLOBAL",
            Self::UpperVariant => "UPPER_VARIANT",
            Self::LowerGlobal => "LOWER_GLOBAL",
            Self::UpperLocalized => "UPPER_LOCALIZED",
            Self::LowerLocalized => "LOWER_LOCALIZED",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundValue {
    Finite(f64),
    /// `+∞`, because the named hypothesis failed.
    Infinite { failed: String },
}

impl BoundValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(*v),
            Self::Infinite { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v:.11e}"),
            Self::Infinite { .. } => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub name: String,
    pub verdict: String,
    pub passed: bool,
}

impl Hypothesis {
    pub(crate) fn new(name: &str, verdict: impl Into<String>, passed: bool) -> Self {
        Self { name: name.to_owned(), verdict: verdict.into(), passed }
    }
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub value: BoundValue,
    pub hypotheses: Vec<Hypothesis>,
    /// Echo of the parameters the value was computed from.
    pub inputs: Vec<(String, String)>,
}

impl BoundReport {
    fn build(kind: BoundKind, log_value: f64, hypotheses: Vec<Hypothesis>, inputs: Vec<(String, String)>) -> Self {
        let value = match hypotheses.iter().find(|h| !h.passed) {
            Some(h) => BoundValue::Infinite { failed: h.name.clone() },
            None => BoundValue::Finite(log_value.exp()),
        };
        Self { kind, value, hypotheses, inputs }
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.11e}")).collect::<Vec<_>>().join(",")
}

fn check_positive_alphas(datum: &Datum, alphas: &[f64]) -> Result<()> {
    datum.check_alphas(alphas)?;
    if let Some(a) = alphas.iter().find(|&&a| a <= 0.0) {
        return invalid(format!("thresholds must be positive, got {a}"));
    }
    Ok(())
}

fn check_unit_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid(format!("alpha must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

fn criticality(datum: &Datum) -> Hypothesis {
    let (critical, defect) = is_globally_critical(datum);
    Hypothesis::new("global criticality", format!("defect={defect:.11e}"), critical)
}

/// Gate on a perceptivity verdict for the query `(alphas, beta)`; an
/// `Unknown` verdict only passes when `force_unknown` is set.
fn perceptivity(verdict: &PerceptivityVerdict, alphas: &[f64], beta: f64, force_unknown: bool) -> Hypothesis {
    const NAME: &str = "perceptivity";
    match verdict.status {
        Status::Certified if verdict.covers(alphas, beta) => Hypothesis::new(NAME, "CERTIFIED", true),
        Status::Certified => Hypothesis::new(NAME, "CERTIFIED at other parameters", false),
        Status::Refuted => Hypothesis::new(NAME, "REFUTED", false),
        Status::Unknown if force_unknown => Hypothesis::new(NAME, "UNKNOWN (forced)", true),
        Status::Unknown => Hypothesis::new(NAME, "UNKNOWN", false),
    }
}

/// `Σ_j q_j dim H_j log α_j`.
fn log_alpha_product(datum: &Datum, alphas: &[f64]) -> f64 {
    datum
        .maps()
        .iter()
        .zip(datum.weights())
        .zip(alphas)
        .map(|((l, q), a)| q * l.rows() as f64 * a.ln())
        .sum()
}

/// `d^{d/2} E(D) ∏_j α_j^{-q_j dim H_j}`, for globally critical
/// `alphas`-perceptive data.
pub fn upper_bound_global(
    datum: &Datum,
    alphas: &[f64],
    verdict: &PerceptivityVerdict,
    force_unknown: bool,
) -> Result<BoundReport> {
    check_positive_alphas(datum, alphas)?;
    let d = datum.ambient_dim() as f64;
    let log_value = 0.5 * d * d.ln() + log_exponential_entropy(datum) - log_alpha_product(datum, alphas);
    let hypotheses = vec![criticality(datum), perceptivity(verdict, alphas, 0.0, force_unknown)];
    let inputs = vec![("alpha".to_owned(), fmt_list(alphas))];
    Ok(BoundReport::build(BoundKind::UpperGlobal, log_value, hypotheses, inputs))
}

/// The global bound multiplied by the distortion `Υ(D)`, with hypotheses
/// checked on the projector datum; `verdict` must concern that datum.
pub fn upper_bound_variant(
    datum: &Datum,
    alphas: &[f64],
    verdict: &PerceptivityVerdict,
    force_unknown: bool,
) -> Result<BoundReport> {
    check_positive_alphas(datum, alphas)?;
    let (proj, distortion) = projector_reduction(datum)?;
    let mut report = upper_bound_global(&proj, alphas, verdict, force_unknown)?;
    report.kind = BoundKind::UpperVariant;
    if let BoundValue::Finite(v) = report.value {
        report.value = BoundValue::Finite(v * distortion);
    }
    report.inputs.push(("distortion".to_owned(), format!("{distortion:.11e}")));
    Ok(report)
}

/// `(C² Σ q_j)^{-d/2} α^{Σ_j q_j rk_α(l_j | W) - dim W}` with
/// `C = 1 + max_j ‖l_j‖`; holds without hypotheses.
pub fn lower_bound_global(datum: &Datum, alpha: f64, w: &Subspace) -> Result<BoundReport> {
    lower_bound(datum, alpha, w, None)
}

/// `((C/α)² t + C² Σ q_j)^{-d/2} α^{Σ_j q_j rk_α(l_j | W) - dim W}` for
/// `R_j = I` and `T = t I`.
pub fn lower_bound_localized(datum: &Datum, t: f64, alpha: f64, w: &Subspace) -> Result<BoundReport> {
    if !(t > 0.0 && t.is_finite()) {
        return invalid(format!("t must be positive, got {t}"));
    }
    lower_bound(datum, alpha, w, Some(t))
}

fn lower_bound(datum: &Datum, alpha: f64, w: &Subspace, t: Option<f64>) -> Result<BoundReport> {
    check_unit_alpha(alpha)?;
    datum.check_subspace(w)?;
    let c = datum.norm_constant();
    let mut exponent = -(w.dim() as f64);
    for (l, q) in datum.maps().iter().zip(datum.weights()) {
        exponent += q * essential_rank_restricted(l, w, alpha)? as f64;
    }
    let base = c * c * datum.weight_sum() + t.map_or(0.0, |t| (c / alpha).powi(2) * t);
    let log_value = -0.5 * datum.ambient_dim() as f64 * base.ln() + exponent * alpha.ln();
    let mut inputs = vec![
        ("alpha".to_owned(), format!("{alpha:.11e}")),
        ("dim_w".to_owned(), w.dim().to_string()),
        ("c".to_owned(), format!("{c:.11e}")),
        ("exponent".to_owned(), format!("{exponent:.11e}")),
    ];
    let kind = match t {
        Some(t) => {
            inputs.push(("t".to_owned(), format!("{t:.11e}")));
            BoundKind::LowerLocalized
        }
        None => BoundKind::LowerGlobal,
    };
    Ok(BoundReport::build(kind, log_value, Vec::new(), inputs))
}

/// `d^{A/2} E(D) ∏_j α_j^{-q_j dim H_j} N^{(A-d+β)/2} ‖T^{-1}‖^{β/2}` for
/// `(alphas, beta)`-perceptive data with `rk_{α_j}(l_j) = dim H_j`.
pub fn upper_bound_localized(
    lrd: &LocalizedRegularizedDatum,
    alphas: &[f64],
    beta: f64,
    verdict: &PerceptivityVerdict,
    force_unknown: bool,
) -> Result<BoundReport> {
    let datum = lrd.datum();
    check_positive_alphas(datum, alphas)?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return invalid(format!("beta must be finite and non-negative, got {beta}"));
    }
    for (j, (l, a)) in datum.maps().iter().zip(alphas).enumerate() {
        let rank = essential_rank(l, *a)?;
        if rank != l.rows() {
            return Err(Error::RankDeficient { index: j, rank, target: l.rows() });
        }
    }
    let d = datum.ambient_dim() as f64;
    let acuity = total_acuity(datum);
    let n = gram_norm(lrd);
    let t_inv = 1.0 / lrd.loc().min_eigenvalue();
    let log_value = 0.5 * acuity * d.ln() + log_exponential_entropy(datum) - log_alpha_product(datum, alphas)
        + 0.5 * (acuity - d + beta) * n.ln()
        + 0.5 * beta * t_inv.ln();
    let hypotheses = vec![perceptivity(verdict, alphas, beta, force_unknown)];
    let inputs = vec![
        ("alpha".to_owned(), fmt_list(alphas)),
        ("beta".to_owned(), format!("{beta:.11e}")),
        ("gram_norm".to_owned(), format!("{n:.11e}")),
        ("loc_inverse_norm".to_owned(), format!("{t_inv:.11e}")),
    ];
    Ok(BoundReport::build(BoundKind::UpperLocalized, log_value, hypotheses, inputs))
}

/// Eigenbasis of `M` (eigenvalues non-increasing) and, for each map, the
/// index set chosen by the descending greedy scan. Indices are 0-based.
#[derive(Debug, Clone)]
pub struct GreedyCertificate {
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub index_sets: Vec<Vec<usize>>,
}

/// Outcome of re-checking a certificate against its datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyCheck {
    /// Every chosen index is far from the images of the later chosen ones.
    pub inclusion: bool,
    /// Every index is close to the images of the chosen indices from it on.
    pub exclusion: bool,
    /// `‖∧_{i ∈ I_j} l_j e_i‖ ≥ d^{-|I_j|/2}` for every `j`.
    pub wedge: bool,
    /// Smallest ratio `‖∧ l_j e_i‖ / d^{-|I_j|/2}` over the maps.
    pub wedge_ratio: f64,
}

impl GreedyCheck {
    pub fn holds(&self) -> bool {
        self.inclusion && self.exclusion && self.wedge
    }
}

impl GreedyCertificate {
    pub fn sizes(&self) -> Vec<usize> {
        self.index_sets.iter().map(Vec::len).collect()
    }

    /// `Σ_j q_j |I_j ∩ (k, d]|` in the 1-based indexing of the eigenvalues.
    pub fn tail_acuity(&self, datum: &Datum, k: usize) -> f64 {
        self.index_sets
            .iter()
            .zip(datum.weights())
            .map(|(set, q)| q * set.iter().filter(|&&i| i >= k).count() as f64)
            .sum()
    }

    pub fn verify(&self, datum: &Datum) -> Result<GreedyCheck> {
        let d = datum.ambient_dim();
        if self.index_sets.len() != datum.len() || self.basis.nrows() != d {
            return invalid("certificate does not match the datum");
        }
        let threshold = 1.0 / (d as f64).sqrt();
        let mut check = GreedyCheck { inclusion: true, exclusion: true, wedge: true, wedge_ratio: f64::INFINITY };
        for (l, set) in datum.maps().iter().zip(&self.index_sets) {
            let images: Vec<DVector<f64>> = (0..d).map(|i| l.matrix() * self.basis.column(i)).collect();
            for i in 0..d {
                let later: Vec<&DVector<f64>> = set.iter().filter(|&&s| s > i).map(|&s| &images[s]).collect();
                let dist = distance_to_span(&images[i], &later);
                if set.contains(&i) {
                    check.inclusion &= dist >= threshold - TAU_GREEDY;
                } else {
                    check.exclusion &= dist < threshold + TAU_GREEDY;
                }
            }
            let chosen: Vec<DVector<f64>> = set.iter().map(|&i| images[i].clone()).collect();
            let wedge = wedge_norm(&chosen);
            let ratio = wedge / threshold.powi(set.len() as i32);
            check.wedge &= ratio >= 1.0 - TAU_GREEDY;
            check.wedge_ratio = check.wedge_ratio.min(ratio);
        }
        Ok(check)
    }
}

/// `‖v_1 ∧ … ∧ v_m‖ = sqrt(det Gram)`.
pub fn wedge_norm(vectors: &[DVector<f64>]) -> f64 {
    if vectors.is_empty() {
        return 1.0;
    }
    let m = DMatrix::from_columns(vectors);
    (m.transpose() * m).determinant().max(0.0).sqrt()
}

fn distance_to_span(x: &DVector<f64>, span: &[&DVector<f64>]) -> f64 {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(span.len());
    for v in span {
        let mut r = (*v).clone();
        for _ in 0..2 {
            for b in &basis {
                r -= b * b.dot(&r);
            }
        }
        let n = r.norm();
        if n > 1e-13 {
            basis.push(r / n);
        }
    }
    let mut r = x.clone();
    for _ in 0..2 {
        for b in &basis {
            r -= b * b.dot(&r);
        }
    }
    r.norm()
}

/// Runs the greedy scan `i = d, …, 1`, keeping `i` in `I_j` iff
/// `dist(l_j e_i, l_j V_{I_j ∩ (i, d]}) ≥ 1/√d`.
pub fn greedy_index_sets(datum: &Datum, m: &SpdMatrix) -> Result<GreedyCertificate> {
    let d = datum.ambient_dim();
    if m.dim() != d || m.is_semidefinite() {
        return invalid(format!("M must be positive definite of dimension {d}"));
    }
    let eig = SymmetricEigen::new(m.matrix().clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let basis = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let threshold = (1.0 - GREEDY_INCLUSION_SLACK) / (d as f64).sqrt();
    let index_sets = datum
        .maps()
        .iter()
        .map(|l| {
            let images: Vec<DVector<f64>> = (0..d).map(|i| l.matrix() * basis.column(i)).collect();
            let mut set: Vec<usize> = Vec::new();
            for i in (0..d).rev() {
                let later: Vec<&DVector<f64>> = set.iter().map(|&s| &images[s]).collect();
                if distance_to_span(&images[i], &later) >= threshold {
                    set.push(i);
                }
            }
            set.reverse();
            set
        })
        .collect();
    Ok(GreedyCertificate { basis, eigenvalues, index_sets })
}

/// Convenience: the global upper bound's value without gating.
pub fn upper_bound_global_formula(datum: &Datum, alphas: &[f64]) -> Result<f64> {
    check_positive_alphas(datum, alphas)?;
    let d = datum.ambient_dim() as f64;
    Ok(d.powf(0.5 * d) * exponential_entropy(datum) * (-log_alpha_product(datum, alphas)).exp())
}
