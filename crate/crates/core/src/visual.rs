//! Covering-number experiments for the visual inequality
//! `N_δ(A) ≤ C δ^{-β} ∏_j α_j^{-q_j dim H_j} ∏_j N_δ(π_{H_j} A)^{q_j}`
//! on finite point clouds inside the closed unit ball.

use std::collections::{HashMap, HashSet};

use nalgebra::DVector;

use crate::bounds::Hypothesis;
use crate::datum::{exponential_entropy, total_acuity, Datum};
use crate::error::{invalid, Result};
use crate::linalg::{LinearMap, Subspace, TAU_ORTH};
use crate::perceptivity::{PerceptivityVerdict, Status};

/// Finite subset of the closed unit ball of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<DVector<f64>>,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<DVector<f64>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return invalid(format!("point {i} has {} coordinates, expected {dim}", p.len()));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return invalid(format!("point {i} has non-finite coordinates"));
            }
            if p.norm() > 1.0 + TAU_ORTH {
                return invalid(format!("point {i} lies outside the unit ball (norm {})", p.norm()));
            }
        }
        Ok(Self { dim, points })
    }

    /// Parses `"d n"` followed by `n` lines of `d` whitespace-separated
    /// coordinates. Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (line_no, header) = match lines.next() {
            Some(h) => h,
            None => return invalid("point cloud is empty: expected a header line \"d n\""),
        };
        let header: Vec<&str> = header.split_whitespace().collect();
        let parse_count = |s: &str| s.parse::<usize>().ok();
        let (dim, n) = match header.as_slice() {
            [d, n] => match (parse_count(d), parse_count(n)) {
                (Some(d), Some(n)) => (d, n),
                _ => return invalid(format!("line {line_no}: header must be two non-negative integers")),
            },
            _ => return invalid(format!("line {line_no}: header must be \"d n\"")),
        };
        let mut points = Vec::with_capacity(n);
        for (line_no, line) in lines {
            let coords: Vec<f64> = line
                .split_whitespace()
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>().map_err(|_| {
                        crate::Error::InvalidInput(format!("line {line_no}, column {}: invalid number {s:?}", c + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if coords.len() != dim {
                return invalid(format!("line {line_no}: expected {dim} coordinates, found {}", coords.len()));
            }
            points.push(DVector::from_vec(coords));
        }
        if points.len() != n {
            return invalid(format!("header announces {n} points, found {}", points.len()));
        }
        Self::new(dim, points)
    }

    /// `{-1/2 + i/n : 0 ≤ i < n}^k × {0}^{d-k}`, a grid of spacing `1/n` in
    /// the first `k` coordinates. Requires `k ≤ 4` to stay inside the ball.
    pub fn slab_grid(d: usize, k: usize, n: usize) -> Result<Self> {
        if k > d || k > 4 || n == 0 {
            return invalid(format!("slab grid needs k ≤ min(d, 4) and n ≥ 1, got d = {d}, k = {k}, n = {n}"));
        }
        let total = n.pow(k as u32);
        let points = (0..total)
            .map(|mut idx| {
                let mut p = DVector::zeros(d);
                for c in 0..k {
                    p[c] = -0.5 + (idx % n) as f64 / n as f64;
                    idx /= n;
                }
                p
            })
            .collect();
        Self::new(d, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn mapped(&self, map: &LinearMap) -> Result<Self> {
        if map.cols() != self.dim {
            return invalid(format!("map acts on dimension {}, cloud has dimension {}", map.cols(), self.dim));
        }
        let points = self.points.iter().map(|p| map.matrix() * p).collect();
        Ok(Self { dim: map.rows(), points })
    }
}

/// `π_W` applied to every point, in the coordinates of the frame of `W`.
pub fn project_cloud(cloud: &PointCloud, w: &Subspace) -> Result<PointCloud> {
    if w.ambient_dim() != cloud.dim {
        return invalid(format!("subspace of R^{} for a cloud in R^{}", w.ambient_dim(), cloud.dim));
    }
    if w.dim() == 0 {
        return Ok(PointCloud { dim: 0, points: vec![DVector::zeros(0); cloud.len()] });
    }
    cloud.mapped(&LinearMap::coordinate_projection(w)?)
}

/// Upper and lower proxies for the `δ`-covering number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringEstimate {
    pub delta: f64,
    /// Occupied half-open cells `∏ [k_i δ, (k_i + 1) δ)`.
    pub cell_count: usize,
    /// Size of the greedy maximal subset with pairwise distances `≥ δ`,
    /// scanning points in input order.
    pub separated_count: usize,
}

fn cell(p: &DVector<f64>, delta: f64) -> Vec<i64> {
    p.iter().map(|x| (x / delta).floor() as i64).collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

pub fn covering_estimate(cloud: &PointCloud, delta: f64) -> Result<CoveringEstimate> {
    check_delta(delta)?;
    if cloud.is_empty() {
        return invalid("covering numbers need a non-empty cloud");
    }
    let cells: HashSet<Vec<i64>> = cloud.points.iter().map(|p| cell(p, delta)).collect();

    let offsets: Vec<Vec<i64>> = (0..3usize.pow(cloud.dim as u32))
        .map(|mut idx| {
            (0..cloud.dim)
                .map(|_| {
                    let o = (idx % 3) as i64 - 1;
                    idx /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let mut kept: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut separated = 0;
    for (i, p) in cloud.points.iter().enumerate() {
        let c = cell(p, delta);
        let close = offsets.iter().any(|o| {
            let n: Vec<i64> = c.iter().zip(o).map(|(a, b)| a + b).collect();
            kept.get(&n).is_some_and(|idx| idx.iter().any(|&k| (&cloud.points[k] - p).norm() < delta))
        });
        if !close {
            kept.entry(c).or_default().push(i);
            separated += 1;
        }
    }
    Ok(CoveringEstimate { delta, cell_count: cells.len(), separated_count: separated })
}

#[derive(Debug, Clone)]
pub struct VisualReport {
    /// Cell count of `A`.
    pub lhs: f64,
    /// `δ^{-β} ∏ α_j^{-q_j dim H_j} ∏ N_δ(π_{H_j} A)^{q_j}` with cell counts.
    pub rhs: f64,
    pub ratio: f64,
    /// `(1 + Σ q_j)^{(A(D) - d + β)/2} E(D)`, the constant without its
    /// dimensional factor.
    pub constant_estimate: f64,
    pub cloud: CoveringEstimate,
    pub projections: Vec<CoveringEstimate>,
    pub hypotheses: Vec<Hypothesis>,
}

impl VisualReport {
    /// Whether `ratio ≤ safety · constant_estimate`.
    pub fn holds_with(&self, safety: f64) -> bool {
        self.ratio <= safety * self.constant_estimate
    }

    pub fn hypotheses_pass(&self) -> bool {
        self.hypotheses.iter().all(|h| h.passed)
    }
}

/// Evaluates both sides of the visual inequality for a projector datum.
pub fn visual_check(
    datum: &Datum,
    cloud: &PointCloud,
    delta: f64,
    alphas: &[f64],
    beta: f64,
    verdict: &PerceptivityVerdict,
    force_unknown: bool,
) -> Result<VisualReport> {
    if !datum.is_projector_datum() {
        return invalid("the visual inequality needs a datum of orthogonal projections");
    }
    datum.check_alphas(alphas)?;
    if alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return invalid("thresholds must lie in (0, 1)");
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return invalid(format!("beta must be finite and non-negative, got {beta}"));
    }
    if cloud.dim != datum.ambient_dim() {
        return invalid(format!("cloud in R^{} for a datum on R^{}", cloud.dim, datum.ambient_dim()));
    }
    let hypothesis = match verdict.status {
        Status::Certified if verdict.covers(alphas, beta) => Hypothesis::new("perceptivity", "CERTIFIED", true),
        Status::Certified => Hypothesis::new("perceptivity", "CERTIFIED at other parameters", false),
        Status::Refuted => Hypothesis::new("perceptivity", "REFUTED", false),
        Status::Unknown if force_unknown => Hypothesis::new("perceptivity", "UNKNOWN (forced)", true),
        Status::Unknown => Hypothesis::new("perceptivity", "UNKNOWN", false),
    };

    let whole = covering_estimate(cloud, delta)?;
    let projections = datum
        .maps()
        .iter()
        .map(|l| covering_estimate(&cloud.mapped(l)?, delta))
        .collect::<Result<Vec<_>>>()?;
    let mut log_rhs = -beta * delta.ln();
    for (((l, q), a), p) in datum.maps().iter().zip(datum.weights()).zip(alphas).zip(&projections) {
        log_rhs += q * ((p.cell_count as f64).ln() - l.rows() as f64 * a.ln());
    }
    let lhs = whole.cell_count as f64;
    let rhs = log_rhs.exp();
    let d = datum.ambient_dim() as f64;
    let constant_estimate =
        (1.0 + datum.weight_sum()).powf(0.5 * (total_acuity(datum) - d + beta)) * exponential_entropy(datum);
    Ok(VisualReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
        constant_estimate,
        cloud: whole,
        projections,
        hypotheses: vec![hypothesis],
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("slope fit needs at least two paired samples");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("slope fit needs distinct abscissae");
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct SlabExperiment {
    pub d: usize,
    pub k: usize,
    pub deltas: Vec<f64>,
    /// `N_δ(A) / ∏_j N_δ(π_{L_j} A)` per `δ`.
    pub ratios: Vec<f64>,
    /// Fitted slope of `log ratio` against `log(1/δ)`.
    pub slope: f64,
}

/// Line projectors onto `e_{k+1}, …, e_d` with unit weights, applied to
/// `A = (δ-grid of [-1/2, 1/2)^k) × {0}`, for each `δ = 1/n`.
pub fn slab_experiment(d: usize, k: usize, ns: &[usize]) -> Result<SlabExperiment> {
    if k == 0 || k >= d {
        return invalid(format!("slab experiment needs 0 < k < d, got d = {d}, k = {k}"));
    }
    let lines: Vec<Subspace> = (k..d).map(|i| Subspace::coordinate(d, &[i])).collect();
    let datum = Datum::from_projectors(&lines, vec![1.0; d - k])?;
    let mut deltas = Vec::with_capacity(ns.len());
    let mut ratios = Vec::with_capacity(ns.len());
    for &n in ns {
        let delta = 1.0 / n as f64;
        let cloud = PointCloud::slab_grid(d, k, n)?;
        let whole = covering_estimate(&cloud, delta)?.cell_count as f64;
        let mut product = 1.0;
        for l in datum.maps() {
            product *= covering_estimate(&cloud.mapped(l)?, delta)?.cell_count as f64;
        }
        deltas.push(delta);
        ratios.push(whole / product);
    }
    let xs: Vec<f64> = deltas.iter().map(|d| -d.ln()).collect();
    let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let slope = fit_slope(&xs, &ys)?;
    Ok(SlabExperiment { d, k, deltas, ratios, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceptivity::{check_perceptivity, SearchBudget};
    use nalgebra::dvector;

    #[test]
    fn covering_examples() {
        let single = PointCloud::new(3, vec![dvector![0.1, 0.2, 0.3]]).unwrap();
        for delta in [0.5, 0.1, 1e-3] {
            let e = covering_estimate(&single, delta).unwrap();
            assert_eq!((e.cell_count, e.separated_count), (1, 1));
        }
        for (d, k) in [(2, 4), (3, 3)] {
            let grid = PointCloud::slab_grid(d, d, k).unwrap();
            let e = covering_estimate(&grid, 1.0 / k as f64).unwrap();
            assert_eq!(e.cell_count, k.pow(d as u32));
            assert_eq!(e.separated_count, k.pow(d as u32));
        }
        let pair = PointCloud::new(2, vec![dvector![0.0, 0.0], dvector![0.05, 0.0]]).unwrap();
        assert_eq!(covering_estimate(&pair, 0.1).unwrap().separated_count, 1);
        assert!(covering_estimate(&pair, 1.0).is_err());
        assert!(covering_estimate(&pair, 0.0).is_err());
        assert!(covering_estimate(&PointCloud::new(2, vec![]).unwrap(), 0.5).is_err());
    }

    #[test]
    fn projection_examples() {
        let grid = PointCloud::slab_grid(2, 2, 8).unwrap();
        let same = project_cloud(&grid, &Subspace::full(2)).unwrap();
        assert_eq!(same, grid);
        let zero = project_cloud(&grid, &Subspace::zero(2)).unwrap();
        assert_eq!(zero.dim(), 0);
        assert_eq!(covering_estimate(&zero, 0.1).unwrap().cell_count, 1);

        let n = 16;
        let diag = Subspace::line(&dvector![1.0, 1.0]).unwrap();
        let projected = project_cloud(&PointCloud::slab_grid(2, 2, n).unwrap(), &diag).unwrap();
        let cells = covering_estimate(&projected, 1.0 / n as f64).unwrap().cell_count;
        let span = (2.0 * (n - 1) as f64 / n as f64) / 2f64.sqrt() * n as f64;
        assert!((cells as f64 - span).abs() <= 2.0, "{cells} vs {span}");
        assert!(project_cloud(&grid, &Subspace::full(3)).is_err());
    }

    #[test]
    fn parse_format() {
        let cloud = PointCloud::parse("2 2\n0.1 0.2\n# comment\n-0.3 0.4\n").unwrap();
        assert_eq!(cloud.len(), 2);
        let err = PointCloud::parse("2 2\n0.1 0.2\n0.3 x\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(PointCloud::parse("2 1\n0.9 0.9\n").is_err());
        assert!(PointCloud::parse("2 3\n0.1 0.2\n").is_err());
        assert!(PointCloud::parse("").is_err());
    }

    #[test]
    fn classical_two_line_case() {
        let lines = [Subspace::coordinate(2, &[0]), Subspace::coordinate(2, &[1])];
        let datum = Datum::from_projectors(&lines, vec![1.0, 1.0]).unwrap();
        let alphas = [0.5, 0.5];
        let verdict = check_perceptivity(&datum, &alphas, 0.0, &SearchBudget::default()).unwrap();
        assert!(verdict.is_certified());
        for n in [16, 64] {
            let cloud = PointCloud::slab_grid(2, 2, n).unwrap();
            let r = visual_check(&datum, &cloud, 1.0 / n as f64, &alphas, 0.0, &verdict, false).unwrap();
            assert_eq!(r.lhs, (n * n) as f64);
            assert_eq!(r.projections.iter().map(|p| p.cell_count).collect::<Vec<_>>(), vec![n, n]);
            assert!((r.ratio - 0.25).abs() < 1e-12);
            assert!((r.constant_estimate - 1.0).abs() < 1e-12);
            assert!(r.holds_with(1.0) && r.hypotheses_pass());
        }
        let single = PointCloud::new(2, vec![dvector![0.3, -0.2]]).unwrap();
        let r = visual_check(&datum, &single, 0.01, &alphas, 0.0, &verdict, false).unwrap();
        assert!((r.ratio - 0.25).abs() < 1e-12);

        let distorted = Datum::distorted_loomis_whitney(0.5).unwrap();
        let cloud = PointCloud::slab_grid(3, 3, 4).unwrap();
        assert!(visual_check(&distorted, &cloud, 0.25, &[0.5; 3], 0.0, &verdict, false).is_err());
    }

    #[test]
    fn slab_slopes() {
        let ns = [8, 16, 32, 64, 128];
        for (d, k) in [(2, 1), (3, 1), (3, 2)] {
            let e = slab_experiment(d, k, &ns).unwrap();
            assert!((e.slope - k as f64).abs() < 1e-9, "{d},{k}: {}", e.slope);
        }
        assert!(slab_experiment(2, 2, &ns).is_err());
    }

    #[test]
    fn slope_fit() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
