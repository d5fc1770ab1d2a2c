//! Euclidean-space primitives: linear maps with cached SVD, subspaces stored as
//! orthonormal frames, symmetric positive (semi-)definite matrices, the
//! principal-angle metric on the Grassmannian and the determinant inequality used by
//! the upper-bound argument.
//!
//! Everything here is immutable after construction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Orthonormality and symmetry tolerance.
pub const TAU_ORTH: f64 = 1e-10;

/// Relative reconstruction tolerance of the SVD.
pub const TAU_SVD: f64 = 1e-12;

/// Default strictness margin for essential ranks: singular values must exceed
/// `alpha + rank_tolerance(sigma_max)` to be counted.
pub fn rank_tolerance(sigma_max: f64) -> f64 {
    1e-10 * sigma_max.max(1.0)
}

/// Thin singular value decomposition `m = u * diag(sigma) * v^T`, with
/// `sigma` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn rank_above(&self, alpha: f64) -> usize {
        count_above(&self.sigma, alpha, None)
    }
}

/// SVD of an arbitrary finite matrix. Empty matrices yield empty factors.
pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if m.iter().any(|x| !x.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    Ok(thin_svd(m))
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    let p = r.min(c);
    if p == 0 {
        return Svd {
            u: DMatrix::zeros(r, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(c, 0),
        };
    }
    let dec = m.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let sigma = order.iter().map(|&i| dec.singular_values[i].max(0.0)).collect();
    let u = DMatrix::from_fn(r, p, |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(c, p, |i, j| v_t[(order[j], i)]);
    Svd { u, sigma, v }
}

/// Singular values of `m`, non-increasing.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows().min(m.ncols());
    if p == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of entries of `sigma` strictly above `alpha` after the strictness
/// margin (default [`rank_tolerance`] of the largest value).
pub fn count_above(sigma: &[f64], alpha: f64, tau: Option<f64>) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    let tau = tau.unwrap_or_else(|| rank_tolerance(top));
    sigma.iter().filter(|&&s| s > alpha + tau).count()
}

/// A linear map `H -> H'` given by a dense `rows x cols` matrix, with its SVD
/// computed once at construction.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    svd: Svd,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return invalid("linear map must have positive dimensions");
        }
        let svd = svd(&matrix)?;
        Ok(Self { matrix, svd })
    }

    /// Row-major constructor.
    pub fn from_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} map, got {}",
                rows * cols,
                entries.len()
            ));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    /// Orthogonal projection onto `w`, written in the coordinates of the
    /// frame of `w` (a `dim W x d` matrix with orthonormal rows).
    pub fn coordinate_projection(w: &Subspace) -> Result<Self> {
        Self::new(w.frame().transpose())
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn svd(&self) -> &Svd {
        &self.svd
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.sigma
    }

    /// Operator norm.
    pub fn norm(&self) -> f64 {
        self.svd.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self) -> usize {
        self.svd.rank_above(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.matrix * factor)
    }

    /// True when `l l^T = I`, i.e. the map is an orthogonal projection onto
    /// its (row space) image expressed in orthonormal target coordinates.
    pub fn is_coisometry(&self) -> bool {
        let g = &self.matrix * self.matrix.transpose();
        let id = DMatrix::<f64>::identity(self.rows(), self.rows());
        (g - id).amax() <= 1e-8
    }

    /// Composite `self ∘ frame(w)`.
    pub fn restricted_matrix(&self, w: &Subspace) -> Result<DMatrix<f64>> {
        if w.ambient_dim() != self.cols() {
            return invalid(format!(
                "subspace lives in dimension {} but the map has {} columns",
                w.ambient_dim(),
                self.cols()
            ));
        }
        Ok(&self.matrix * w.frame())
    }

    /// Singular values padded with zeros to length `cols`, together with a
    /// full orthonormal basis of the source whose `i`-th column is the right
    /// singular vector of the `i`-th value.
    pub fn right_basis(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.cols();
        let mut sigma = self.svd.sigma.clone();
        let mut cols: Vec<DVector<f64>> = self.svd.v.column_iter().map(|c| c.into_owned()).collect();
        if cols.len() < d {
            let span = Subspace::from_frame_unchecked(self.svd.v.clone());
            for c in span.complement().frame().column_iter() {
                cols.push(c.into_owned());
            }
        }
        sigma.resize(d, 0.0);
        (sigma, DMatrix::from_columns(&cols))
    }

    /// `(Ker l)^⊥`, the span of right singular vectors with non-zero values.
    pub fn row_space(&self) -> Subspace {
        let r = self.rank();
        Subspace::from_frame_unchecked(self.svd.v.columns(0, r).into_owned())
    }

    pub fn kernel(&self) -> Subspace {
        self.row_space().complement()
    }
}

/// Singular value decomposition of a map (sorted values, orthonormal frames).
pub fn svd_of(map: &LinearMap) -> (&DMatrix<f64>, &[f64], &DMatrix<f64>) {
    let s = map.svd();
    (&s.u, &s.sigma, &s.v)
}

/// `rk_alpha(l)`: number of singular values strictly above `alpha`.
pub fn essential_rank(map: &LinearMap, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    Ok(count_above(map.singular_values(), alpha, None))
}

/// `rk_alpha(l | W)`.
pub fn essential_rank_restricted(map: &LinearMap, w: &Subspace, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    let m = map.restricted_matrix(w)?;
    Ok(count_above(&singular_values(&m), alpha, None))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return invalid(format!("threshold must be a finite non-negative real, got {alpha}"));
    }
    Ok(())
}

/// Smallest `E ⊆ H'` with `l(B_1^W) ⊆ B_alpha + E`: the span of the images of
/// the right singular vectors of `l|W` whose singular values exceed `alpha`.
pub fn minimal_covering_subspace(map: &LinearMap, w: &Subspace, alpha: f64) -> Result<Subspace> {
    check_alpha(alpha)?;
    let m = map.restricted_matrix(w)?;
    let s = thin_svd(&m);
    let r = s.rank_above(alpha);
    Ok(Subspace::from_frame_unchecked(s.u.columns(0, r).into_owned()))
}

/// A linear subspace of `R^d` stored as a `d x k` orthonormal frame.
#[derive(Debug, Clone)]
pub struct Subspace {
    frame: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(d: usize) -> Self {
        Self { frame: DMatrix::zeros(d, 0) }
    }

    pub fn full(d: usize) -> Self {
        Self { frame: DMatrix::identity(d, d) }
    }

    /// Validates orthonormality of the columns.
    pub fn from_frame(frame: DMatrix<f64>) -> Result<Self> {
        if frame.iter().any(|x| !x.is_finite()) {
            return invalid("frame has non-finite entries");
        }
        if frame.ncols() > frame.nrows() {
            return invalid("frame has more columns than its ambient dimension");
        }
        let k = frame.ncols();
        let g = frame.transpose() * &frame;
        if (g - DMatrix::<f64>::identity(k, k)).amax() > TAU_ORTH {
            return invalid("frame columns are not orthonormal");
        }
        Ok(Self { frame })
    }

    pub(crate) fn from_frame_unchecked(frame: DMatrix<f64>) -> Self {
        Self { frame }
    }

    /// Span of the given vectors; numerically dependent directions are dropped.
    pub fn span(d: usize, vectors: &[DVector<f64>]) -> Result<Self> {
        if vectors.iter().any(|v| v.len() != d) {
            return invalid(format!("all spanning vectors must have length {d}"));
        }
        if vectors.is_empty() {
            return Ok(Self::zero(d));
        }
        Self::span_columns(&DMatrix::from_columns(vectors))
    }

    /// Column span of `m`.
    pub fn span_columns(m: &DMatrix<f64>) -> Result<Self> {
        let s = svd(m)?;
        let top = s.sigma.first().copied().unwrap_or(0.0);
        let r = s.sigma.iter().filter(|&&x| x > 1e-10 * top.max(1e-300)).count();
        let r = if top <= 1e-14 { 0 } else { r };
        Ok(Self { frame: s.u.columns(0, r).into_owned() })
    }

    pub fn line(v: &DVector<f64>) -> Result<Self> {
        Self::span(v.len(), std::slice::from_ref(v))
    }

    /// Span of the standard basis vectors with the given (0-based) indices.
    pub fn coordinate(d: usize, indices: &[usize]) -> Self {
        let mut frame = DMatrix::zeros(d, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            frame[(i, c)] = 1.0;
        }
        Self { frame }
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn projector_matrix(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.frame * (self.frame.transpose() * v)
    }

    pub fn complement(&self) -> Self {
        let d = self.ambient_dim();
        let k = self.dim();
        if k == 0 {
            return Self::full(d);
        }
        if k == d {
            return Self::zero(d);
        }
        let resid = DMatrix::<f64>::identity(d, d) - self.projector_matrix();
        let eig = SymmetricEigen::new(resid);
        let cols: Vec<DVector<f64>> = (0..d)
            .filter(|&i| eig.eigenvalues[i] > 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        // re-orthonormalise to absorb eigen-solver noise
        Self::span(d, &cols).unwrap_or_else(|_| Self::zero(d))
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.same_ambient(other)?;
        let d = self.ambient_dim();
        let cols: Vec<DVector<f64>> = self
            .frame
            .column_iter()
            .chain(other.frame.column_iter())
            .map(|c| c.into_owned())
            .collect();
        Self::span(d, &cols)
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.same_ambient(other)?;
        Ok(self.complement().sum(&other.complement())?.complement())
    }

    /// Whether `other ⊆ self` up to `tol` in operator norm of the residual.
    pub fn contains(&self, other: &Self, tol: f64) -> bool {
        if self.ambient_dim() != other.ambient_dim() {
            return false;
        }
        let resid = &other.frame - &self.frame * (self.frame.transpose() * &other.frame);
        resid.iter().all(|x| x.abs() <= tol)
    }

    fn same_ambient(&self, other: &Self) -> Result<()> {
        if self.ambient_dim() != other.ambient_dim() {
            return invalid(format!(
                "subspaces live in different ambient dimensions ({} vs {})",
                self.ambient_dim(),
                other.ambient_dim()
            ));
        }
        Ok(())
    }
}

/// Principal angles between `v` and `w`, ascending; there are
/// `min(dim v, dim w)` of them.
pub fn principal_angles(v: &Subspace, w: &Subspace) -> Result<Vec<f64>> {
    v.same_ambient(w)?;
    let (a, b) = if v.dim() >= w.dim() { (v, w) } else { (w, v) };
    // cosines lose precision near zero angles, sines near right angles
    let cosines = singular_values(&(a.frame().transpose() * b.frame()));
    let mut sines = singular_values(&(b.frame() - a.frame() * (a.frame().transpose() * b.frame())));
    sines.reverse();
    Ok(cosines
        .iter()
        .zip(&sines)
        .map(|(c, s)| if c * c > 0.5 { s.clamp(0.0, 1.0).asin() } else { c.clamp(0.0, 1.0).acos() })
        .collect())
}

/// ℓ² norm of the principal angles; `+∞` between subspaces of different
/// dimensions.
pub fn principal_angle_distance(v: &Subspace, w: &Subspace) -> Result<f64> {
    v.same_ambient(w)?;
    if v.dim() != w.dim() {
        return Ok(f64::INFINITY);
    }
    let angles = principal_angles(v, w)?;
    Ok(angles.iter().map(|a| a * a).sum::<f64>().sqrt())
}

/// `frame(w) frame(w)^T`, as a square map of the ambient space.
pub fn orthogonal_projector(w: &Subspace) -> Result<LinearMap> {
    if w.ambient_dim() == 0 {
        return invalid("ambient dimension must be positive");
    }
    LinearMap::new(w.projector_matrix())
}

/// Symmetric matrix, positive definite unless built as semi-definite.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    semidefinite: bool,
}

impl SpdMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let s = Self::build(matrix, false)?;
        if s.eigenvalues[0] <= 0.0 {
            return invalid(format!(
                "matrix is not positive definite (smallest eigenvalue {:e})",
                s.eigenvalues[0]
            ));
        }
        Ok(s)
    }

    pub fn new_semidefinite(matrix: DMatrix<f64>) -> Result<Self> {
        let s = Self::build(matrix, true)?;
        let scale = s.eigenvalues.last().copied().unwrap_or(0.0).abs().max(1.0);
        if s.eigenvalues[0] < -TAU_ORTH * scale {
            return invalid(format!(
                "matrix is not positive semi-definite (smallest eigenvalue {:e})",
                s.eigenvalues[0]
            ));
        }
        Ok(s)
    }

    fn build(matrix: DMatrix<f64>, semidefinite: bool) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return invalid("SPD matrix must be square with positive dimension");
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return invalid("SPD matrix has non-finite entries");
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > TAU_ORTH * scale {
            return invalid("matrix is not symmetric");
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(sym.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self { matrix: sym, eigenvalues, semidefinite })
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        Self::new(DMatrix::identity(d, d) * s).expect("positive multiple of identity")
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_semidefinite(&self) -> bool {
        self.semidefinite
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty")
    }

    pub fn det(&self) -> f64 {
        self.eigenvalues.iter().product()
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|x| x.ln()).sum()
    }
}

/// Both sides of `det Q <= |e_1 ∧ … ∧ e_d|^{-2} ∏ <Q e_k, e_k>` for a full basis.
pub fn det_bound_check(q: &SpdMatrix, basis: &[DVector<f64>]) -> Result<(f64, f64)> {
    let d = q.dim();
    if basis.len() != d || basis.iter().any(|v| v.len() != d) {
        return invalid(format!("basis must consist of {d} vectors of length {d}"));
    }
    let b = DMatrix::from_columns(basis);
    let wedge = b.determinant().abs();
    let scale: f64 = basis.iter().map(|v| v.norm()).product();
    if !(wedge > 1e-12 * scale) {
        return invalid("basis is degenerate");
    }
    let lhs = q.det();
    let diag: f64 = basis.iter().map(|e| e.dot(&(q.matrix() * e))).product();
    Ok((lhs, diag / (wedge * wedge)))
}

/// Uniformly distributed `d x k` orthonormal frame (QR of a Gaussian matrix,
/// sign-fixed).
pub fn random_frame<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    if k == 0 {
        return DMatrix::zeros(d, 0);
    }
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn random_subspace<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Subspace {
    Subspace::from_frame_unchecked(random_frame(rng, d, k))
}

/// Orthonormalise the columns of a full-column-rank matrix.
pub(crate) fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q()
}
