//! The Brascamp-Lieb datum and its scalar functionals.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{essential_rank_restricted, LinearMap, SpdMatrix, Subspace};

/// Tolerance on the scaling identity `Σ q_j dim H_j = d`, relative to `d`.
pub fn criticality_tolerance(d: usize) -> f64 {
    1e-9 * d as f64
}

/// A datum `D = ((l_j)_j, (q_j)_j)` with `l_j : R^d -> R^{dim H_j}`.
#[derive(Debug, Clone)]
pub struct Datum {
    ambient_dim: usize,
    maps: Vec<LinearMap>,
    weights: Vec<f64>,
}

impl Datum {
    pub fn new(maps: Vec<LinearMap>, weights: Vec<f64>) -> Result<Self> {
        if maps.is_empty() {
            return invalid("a datum needs at least one map");
        }
        if maps.len() != weights.len() {
            return invalid(format!("{} maps but {} weights", maps.len(), weights.len()));
        }
        if let Some((j, q)) = weights.iter().enumerate().find(|(_, q)| !(**q > 0.0 && q.is_finite())) {
            return invalid(format!("weight {j} must be a positive finite real, got {q}"));
        }
        let ambient_dim = maps[0].cols();
        if let Some(j) = maps.iter().position(|m| m.cols() != ambient_dim) {
            return invalid(format!(
                "map {j} has {} columns, expected the ambient dimension {ambient_dim}",
                maps[j].cols()
            ));
        }
        Ok(Self { ambient_dim, maps, weights })
    }

    /// Datum of orthogonal projections onto the given subspaces, each written
    /// in the orthonormal coordinates of its frame so that `dim H_j = dim V_j`.
    pub fn from_projectors(subspaces: &[Subspace], weights: Vec<f64>) -> Result<Self> {
        let maps = subspaces
            .iter()
            .map(LinearMap::coordinate_projection)
            .collect::<Result<Vec<_>>>()?;
        Self::new(maps, weights)
    }

    /// Young's convolution datum on `R^2`: `x`, `y` and `x - y`.
    pub fn young(q: [f64; 3]) -> Result<Self> {
        let maps = vec![
            LinearMap::from_rows(1, 2, &[1.0, 0.0])?,
            LinearMap::from_rows(1, 2, &[0.0, 1.0])?,
            LinearMap::from_rows(1, 2, &[1.0, -1.0])?,
        ];
        Self::new(maps, q.to_vec())
    }

    /// Loomis-Whitney datum on `R^3` with weights `1/2`.
    pub fn loomis_whitney() -> Result<Self> {
        Self::distorted_loomis_whitney(1.0)
    }

    /// `(x2, x3)`, `(x1, x3)`, `(x1, λ x2)` with weights `1/2`.
    pub fn distorted_loomis_whitney(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be positive, got {lambda}"));
        }
        let maps = vec![
            LinearMap::from_rows(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0])?,
            LinearMap::from_rows(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0])?,
            LinearMap::from_rows(2, 3, &[1.0, 0.0, 0.0, 0.0, lambda, 0.0])?,
        ];
        Self::new(maps, vec![0.5; 3])
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn maps(&self) -> &[LinearMap] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn target_dims(&self) -> Vec<usize> {
        self.maps.iter().map(LinearMap::rows).collect()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `1 + max_j ‖l_j‖`.
    pub fn norm_constant(&self) -> f64 {
        1.0 + self.maps.iter().map(LinearMap::norm).fold(0.0, f64::max)
    }

    /// Whether every map satisfies `l l^T = I`.
    pub fn is_projector_datum(&self) -> bool {
        self.maps.iter().all(LinearMap::is_coisometry)
    }

    /// Sub-datum keeping the maps with the given indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.len()) {
            return invalid(format!("map index {j} out of range"));
        }
        Self::new(
            indices.iter().map(|&j| self.maps[j].clone()).collect(),
            indices.iter().map(|&j| self.weights[j]).collect(),
        )
    }

    /// Same maps with new weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.maps.clone(), weights)
    }

    pub(crate) fn check_alphas(&self, alphas: &[f64]) -> Result<()> {
        if alphas.len() != self.len() {
            return invalid(format!("expected {} thresholds, got {}", self.len(), alphas.len()));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
            return invalid(format!("thresholds must be finite and non-negative, got {a}"));
        }
        Ok(())
    }

    pub(crate) fn check_subspace(&self, w: &Subspace) -> Result<()> {
        if w.ambient_dim() != self.ambient_dim {
            return invalid(format!(
                "subspace lives in dimension {}, the datum in {}",
                w.ambient_dim(),
                self.ambient_dim
            ));
        }
        Ok(())
    }
}

/// `(D, R, T)`: a datum with regularisers `R_j` on each `H_j` and a localiser
/// `T` on `H`.
#[derive(Debug, Clone)]
pub struct LocalizedRegularizedDatum {
    datum: Datum,
    regs: Vec<SpdMatrix>,
    loc: SpdMatrix,
}

impl LocalizedRegularizedDatum {
    pub fn new(datum: Datum, regs: Vec<SpdMatrix>, loc: SpdMatrix) -> Result<Self> {
        if regs.len() != datum.len() {
            return invalid(format!("{} regularisers for {} maps", regs.len(), datum.len()));
        }
        for (j, (r, m)) in regs.iter().zip(datum.maps()).enumerate() {
            if r.dim() != m.rows() || r.is_semidefinite() {
                return invalid(format!(
                    "regulariser {j} must be positive definite of dimension {}",
                    m.rows()
                ));
            }
        }
        if loc.dim() != datum.ambient_dim() || loc.is_semidefinite() {
            return invalid(format!(
                "localiser must be positive definite of dimension {}",
                datum.ambient_dim()
            ));
        }
        Ok(Self { datum, regs, loc })
    }

    /// `R_j = t I` and `T = eps I`.
    pub fn isotropic(datum: Datum, t: f64, eps: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite() && eps > 0.0 && eps.is_finite()) {
            return invalid(format!("t and eps must be positive, got t = {t}, eps = {eps}"));
        }
        let regs = datum.target_dims().into_iter().map(|k| SpdMatrix::scaled_identity(k, t)).collect();
        let loc = SpdMatrix::scaled_identity(datum.ambient_dim(), eps);
        Self::new(datum, regs, loc)
    }

    pub fn datum(&self) -> &Datum {
        &self.datum
    }

    pub fn regs(&self) -> &[SpdMatrix] {
        &self.regs
    }

    pub fn loc(&self) -> &SpdMatrix {
        &self.loc
    }
}

/// `T + Σ_j q_j l_j^T A_j l_j`.
pub(crate) fn weighted_gram(datum: &Datum, mats: &[&DMatrix<f64>], t: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = t.clone();
    for ((l, a), q) in datum.maps().iter().zip(mats).zip(datum.weights()) {
        let lm = l.matrix();
        m += (lm.transpose() * *a * lm) * *q;
    }
    (&m + m.transpose()) * 0.5
}

/// Criticality flag and defect `Σ q_j dim H_j - d`.
pub fn is_globally_critical(datum: &Datum) -> (bool, f64) {
    let defect = total_acuity(datum) - datum.ambient_dim() as f64;
    (defect.abs() <= criticality_tolerance(datum.ambient_dim()), defect)
}

/// `Σ_j q_j rk_{α_j}(l_j | W)`.
pub fn essential_acuity(datum: &Datum, alphas: &[f64], w: &Subspace) -> Result<f64> {
    datum.check_alphas(alphas)?;
    datum.check_subspace(w)?;
    let mut total = 0.0;
    for ((l, a), q) in datum.maps().iter().zip(alphas).zip(datum.weights()) {
        total += q * essential_rank_restricted(l, w, *a)? as f64;
    }
    Ok(total)
}

/// `Σ_j q_j dim H_j`.
pub fn total_acuity(datum: &Datum) -> f64 {
    datum.maps().iter().zip(datum.weights()).map(|(l, q)| q * l.rows() as f64).sum()
}

/// `∏_j q_j^{-q_j dim H_j / 2}`.
pub fn exponential_entropy(datum: &Datum) -> f64 {
    log_exponential_entropy(datum).exp()
}

pub(crate) fn log_exponential_entropy(datum: &Datum) -> f64 {
    datum
        .maps()
        .iter()
        .zip(datum.weights())
        .map(|(l, q)| -q * l.rows() as f64 * q.ln() / 2.0)
        .sum()
}

/// Replaces every map by the orthogonal projection onto `(Ker l_j)^⊥`
/// (in coordinates of that subspace) and returns the distortion
/// `Υ = ∏_j (∏ non-zero σ_i(l_j))^{-q_j}`.
pub fn projector_reduction(datum: &Datum) -> Result<(Datum, f64)> {
    let mut maps = Vec::with_capacity(datum.len());
    let mut log_distortion = 0.0;
    for (j, (l, q)) in datum.maps().iter().zip(datum.weights()).enumerate() {
        let rank = l.rank();
        if rank < l.rows() {
            return Err(Error::NotSurjective { index: j, rank, target: l.rows() });
        }
        maps.push(LinearMap::coordinate_projection(&l.row_space())?);
        log_distortion -= q * l.singular_values()[..rank].iter().map(|s| s.ln()).sum::<f64>();
    }
    Ok((Datum::new(maps, datum.weights().to_vec())?, log_distortion.exp()))
}

/// `‖T + Σ_j q_j l_j^T R_j l_j‖`.
pub fn gram_norm(lrd: &LocalizedRegularizedDatum) -> f64 {
    let regs: Vec<&DMatrix<f64>> = lrd.regs().iter().map(SpdMatrix::matrix).collect();
    let m = weighted_gram(lrd.datum(), &regs, lrd.loc().matrix());
    SpdMatrix::new_semidefinite(m).map(|s| s.max_eigenvalue()).unwrap_or(f64::NAN)
}

/// `Σ_j q_j dim l_j(W) - dim W`.
pub fn algebraic_perceptivity_defect(datum: &Datum, w: &Subspace) -> Result<f64> {
    let zeros = vec![0.0; datum.len()];
    Ok(essential_acuity(datum, &zeros, w)? - w.dim() as f64)
}
