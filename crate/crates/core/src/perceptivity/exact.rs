//! Exact perceptivity decision in low dimension.
//!
//! Each map is replaced by a model whose restricted essential rank depends on
//! `W` only through one quantity `‖π_W u‖²`: a rank-one map `σ u v^T`, or a
//! map whose singular values are `(s, …, s, m)`. The Weyl margin between the
//! map and its model is added to the threshold, so model ranks never exceed
//! the true ones and a certificate for the model is a certificate for the
//! datum. Minimising the acuity then amounts to choosing which maps are
//! inactive and asking whether some `W` realises that choice.

use nalgebra::DVector;

use super::feasible::{self, Constraint, Feasibility};
use super::slack;
use crate::datum::Datum;
use crate::error::Result;
use crate::linalg::{LinearMap, Subspace};

/// Largest ambient dimension handled exactly.
pub const D_MAX_EXACT: usize = 4;

/// Largest number of switchable maps enumerated exhaustively.
const MAX_SWITCHABLE: usize = 16;

/// Threshold offset used when constructing refutation witnesses.
const TIGHT_TAU: f64 = 0.5e-10;

#[derive(Debug, Clone)]
pub(crate) enum Shape {
    /// `σ u v^T`: restricted rank is `[σ ‖π_W v‖ > θ]`.
    RankOne { v: DVector<f64>, sigma: f64 },
    /// Singular values `(s, …, s, m)` with the last right singular vector `n`.
    Iso { n: DVector<f64>, s: f64, m: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Model {
    shape: Shape,
    /// Operator-norm distance between the map and its model.
    margin: f64,
    /// Strictness margin used by the rank count of the map.
    tau: f64,
}

impl Model {
    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Rank-one model of `map`.
    pub fn rank_one(map: &LinearMap) -> Self {
        let (sigma, v) = map.right_basis();
        Self {
            shape: Shape::RankOne { v: v.column(0).into_owned(), sigma: sigma[0] },
            margin: sigma.get(1).copied().unwrap_or(0.0),
            tau: crate::linalg::rank_tolerance(map.norm()),
        }
    }

    /// Model with the smallest margin among the applicable shapes.
    pub fn fit(map: &LinearMap) -> Self {
        let d = map.cols();
        let one = Self::rank_one(map);
        if d < 2 || map.rows().min(d) + 1 < d {
            return one;
        }
        let (sigma, v) = map.right_basis();
        let top = &sigma[..d - 1];
        let (hi, lo) = (top[0], top[d - 2]);
        let iso = Self {
            shape: Shape::Iso { n: v.column(d - 1).into_owned(), s: 0.5 * (hi + lo), m: sigma[d - 1] },
            margin: 0.5 * (hi - lo),
            tau: one.tau,
        };
        if iso.margin <= one.margin {
            iso
        } else {
            one
        }
    }

    /// Contribution of the model to `rk_α(· | W)` for `dim W = k`, where the
    /// threshold is `alpha + margin + tau`, or `alpha + TIGHT_TAU` when `tight`.
    fn contribution(&self, k: usize, alpha: f64, tight: bool) -> Contribution {
        let theta = if tight { alpha + TIGHT_TAU } else { alpha + self.margin + self.tau };
        match &self.shape {
            Shape::RankOne { v, sigma } => {
                if *sigma <= theta {
                    Contribution::Fixed(0)
                } else {
                    Contribution::Switch { active: 1, inactive: Constraint::at_most(v, (theta / sigma).powi(2)) }
                }
            }
            Shape::Iso { n, s, m } => {
                let gap = s * s - m * m;
                if *s <= theta {
                    Contribution::Fixed(0)
                } else if *m > theta || gap <= 1e-14 * s * s {
                    Contribution::Fixed(k)
                } else {
                    let b = (s * s - theta * theta) / gap;
                    Contribution::Switch { active: k, inactive: Constraint::at_least(n, b) }
                }
            }
        }
    }
}

enum Contribution {
    Fixed(usize),
    /// Contributes `active` unless the constraint holds, then `active - 1`.
    Switch { active: usize, inactive: Constraint },
}

#[derive(Debug, Clone)]
pub(crate) struct ExactOutcome {
    /// Lower bound on the slack over all `W` (exact when `decided`).
    pub min_slack: f64,
    /// Verified violating subspace and its true slack.
    pub refutation: Option<(Subspace, f64)>,
    /// Whether every violating activation pattern was decided.
    pub decided: bool,
    pub samples: usize,
}

/// Whether the engine can run at all on this datum.
pub(crate) fn applicable(datum: &Datum) -> bool {
    datum.ambient_dim() <= D_MAX_EXACT && datum.len() <= MAX_SWITCHABLE
}

pub(crate) fn run(datum: &Datum, alphas: &[f64], beta: f64, models: &[Model], tau_slack: f64) -> Result<ExactOutcome> {
    let d = datum.ambient_dim();
    let q = datum.weights();
    let mut out = ExactOutcome { min_slack: beta, refutation: None, decided: true, samples: 0 };

    let record = |out: &mut ExactOutcome, w: Subspace, s: f64| {
        if s < -tau_slack && out.refutation.as_ref().is_none_or(|(_, best)| s < *best) {
            out.refutation = Some((w, s));
        }
    };

    for k in 1..d {
        let contribs: Vec<Contribution> =
            models.iter().zip(alphas).map(|(m, &a)| m.contribution(k, a, false)).collect();
        let mut base = 0.0;
        let mut switchable = Vec::new();
        for (j, c) in contribs.iter().enumerate() {
            match c {
                Contribution::Fixed(r) => base += q[j] * *r as f64,
                Contribution::Switch { active, .. } => {
                    base += q[j] * *active as f64;
                    switchable.push(j);
                }
            }
        }
        let full_slack = base - k as f64 + beta;

        let mut masks: Vec<u32> = (0..1u32 << switchable.len()).collect();
        let lost = |mask: u32| -> f64 {
            switchable.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| q[j]).sum()
        };
        masks.sort_by(|&a, &b| lost(b).total_cmp(&lost(a)).then(a.count_ones().cmp(&b.count_ones())).then(a.cmp(&b)));

        let mut infeasible: Vec<u32> = Vec::new();
        let mut slack_k = None;
        for mask in masks {
            if infeasible.iter().any(|&bad| mask & bad == bad) {
                continue;
            }
            let s = full_slack - lost(mask);
            let members: Vec<usize> =
                switchable.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &j)| j).collect();
            let constraints: Vec<Constraint> = members
                .iter()
                .map(|&j| match &contribs[j] {
                    Contribution::Switch { inactive, .. } => inactive.clone(),
                    Contribution::Fixed(_) => unreachable!("only switchable maps are enumerated"),
                })
                .collect();
            out.samples += 1;
            match feasible::solve(d, k, &constraints) {
                Feasibility::Infeasible => infeasible.push(mask),
                Feasibility::Undecided => {
                    if s < -tau_slack {
                        out.decided = false;
                    }
                }
                Feasibility::Feasible(w) => {
                    slack_k.get_or_insert(s);
                    if s >= -tau_slack {
                        break;
                    }
                    let verified = match verify(datum, alphas, beta, &w)? {
                        Some(found) => Some(found),
                        None => tight_witness(datum, alphas, beta, models, k, &members)?,
                    };
                    match verified {
                        Some((w, true_slack)) => {
                            record(&mut out, w, true_slack);
                            break;
                        }
                        None => out.decided = false,
                    }
                }
            }
        }
        // the empty pattern is always feasible, so slack_k is set unless undecided
        out.min_slack = out.min_slack.min(slack_k.unwrap_or(full_slack - lost(u32::MAX)));
    }

    let full = Subspace::full(d);
    let s = slack(datum, alphas, beta, &full)?;
    out.min_slack = out.min_slack.min(s);
    record(&mut out, full, s);
    if let Some((_, s)) = &out.refutation {
        out.min_slack = out.min_slack.min(*s);
    }
    Ok(out)
}

fn verify(datum: &Datum, alphas: &[f64], beta: f64, w: &Subspace) -> Result<Option<(Subspace, f64)>> {
    let s = slack(datum, alphas, beta, w)?;
    let tau = super::slack_tolerance(datum);
    Ok((s < -tau).then(|| (w.clone(), s)))
}

/// Re-solves the pattern with thresholds at the rank-count margin itself, so
/// that boundary witnesses land on the inactive side of the true test.
fn tight_witness(
    datum: &Datum,
    alphas: &[f64],
    beta: f64,
    models: &[Model],
    k: usize,
    members: &[usize],
) -> Result<Option<(Subspace, f64)>> {
    let mut constraints = Vec::new();
    for &j in members {
        match models[j].contribution(k, alphas[j], true) {
            Contribution::Fixed(0) => {}
            Contribution::Fixed(_) => return Ok(None),
            Contribution::Switch { inactive, .. } => constraints.push(inactive),
        }
    }
    match feasible::solve(datum.ambient_dim(), k, &constraints) {
        Feasibility::Feasible(w) => verify(datum, alphas, beta, &w),
        _ => Ok(None),
    }
}
