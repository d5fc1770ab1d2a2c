//! Acceptance gate: one test per criterion, each printing a single
//! `PASS`/`FAIL` line with the measured quantities.

use std::time::{Duration, Instant};

use blbound::bounds::{
    greedy_index_sets, lower_bound_global, lower_bound_localized, upper_bound_global, upper_bound_localized,
    upper_bound_variant,
};
use blbound::datum::{is_globally_critical, Datum, LocalizedRegularizedDatum};
use blbound::lieb_oracle::{bl_limit, maximize_gaussian, young_constant, OracleOptions, Schedule};
use blbound::linalg::{
    det_bound_check, essential_rank, principal_angle_distance, random_frame, LinearMap, SpdMatrix, Subspace,
};
use blbound::perceptivity::{beta_min_estimate, check_perceptivity, rank_one_exact_check, Method, SearchBudget, Status};
use blbound::visual::{fit_slope, slab_experiment, visual_check, PointCloud};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(criterion: u32, ok: bool, detail: String) {
    println!("{} criterion {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> SpdMatrix {
    let g = gaussian(rng, d, d);
    SpdMatrix::new(&g * g.transpose() + DMatrix::identity(d, d) * 0.05).unwrap()
}

#[test]
fn criterion_01_loomis_whitney_ground_truth() {
    let start = Instant::now();
    let est = bl_limit(&Datum::loomis_whitney().unwrap(), &Schedule::default(), &OracleOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let ok = (est.estimate - 1.0).abs() < 1e-3 && elapsed < Duration::from_secs(10);
    verdict(1, ok, format!("BL(D_1) = {:.9} (tolerance 1e-3), runtime {elapsed:.2?} (limit 10 s)", est.estimate));
}

#[test]
fn criterion_02_distorted_scaling() {
    let start = Instant::now();
    let proj = Datum::loomis_whitney().unwrap();
    let alphas = [0.577; 3];
    let v = check_perceptivity(&proj, &alphas, 0.0, &SearchBudget::default()).unwrap();
    let mut ok = v.is_certified();
    let mut ratios = Vec::new();
    let mut worst: f64 = 0.0;
    for lambda in [1.0, 0.5, 0.1, 0.01] {
        let datum = Datum::distorted_loomis_whitney(lambda).unwrap();
        let oracle = bl_limit(&datum, &Schedule::default(), &OracleOptions::default()).unwrap().estimate;
        let rel = (oracle / lambda.powf(-0.5) - 1.0).abs();
        worst = worst.max(rel);
        ok &= rel < 0.02;
        let bound = upper_bound_variant(&datum, &alphas, &v, false).unwrap().value.finite();
        match bound {
            Some(b) => ratios.push(b / oracle),
            None => ok = false,
        }
    }
    let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min) - 1.0;
    let elapsed = start.elapsed();
    ok &= spread < 0.05 && elapsed < Duration::from_secs(60);
    verdict(
        2,
        ok,
        format!(
            "max |oracle λ^(1/2) - 1| = {worst:.2e} (tolerance 0.02), variant/oracle spread {spread:.2e} (tolerance 0.05), runtime {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_03_young_sandwich() {
    let q = [2.0 / 3.0; 3];
    let young = Datum::young(q).unwrap();
    let closed = young_constant(q);
    let oracle = bl_limit(&young, &Schedule::default(), &OracleOptions::default()).unwrap().estimate;
    let lower = lower_bound_global(&young, 1.0, &Subspace::zero(2)).unwrap().value.finite().unwrap();
    let v = check_perceptivity(&young, &[0.44; 3], 0.0, &SearchBudget::default()).unwrap();
    let upper = upper_bound_global(&young, &[0.44; 3], &v, false).unwrap().value.finite().unwrap_or(f64::INFINITY);

    let a = 1.0 / 5f64.sqrt() - 1e-9;
    let v_lim = rank_one_exact_check(&young, &[a; 3], 0.0).unwrap();
    let limit = upper_bound_global(&young, &[a; 3], &v_lim, false).unwrap().value.finite().unwrap_or(f64::INFINITY);
    let formula = 10.0 / q.iter().map(|q| q.powf(q / 2.0)).product::<f64>();

    let ok = lower <= oracle
        && oracle <= upper
        && (oracle / closed - 1.0).abs() < 0.01
        && (limit - formula).abs() < 1e-6;
    verdict(
        3,
        ok,
        format!(
            "{lower:.6} ≤ oracle {oracle:.9} ≤ {upper:.6}; closed form {closed:.9}; α→1/√5 bound {limit:.9} vs {formula:.9}"
        ),
    );
}

#[test]
fn criterion_04_rank_one_exactness() {
    let start = Instant::now();
    let young = Datum::young([2.0 / 3.0; 3]).unwrap();
    let threshold = 1.0 / 5f64.sqrt();
    let below: Vec<f64> = (1..=44).map(|i| i as f64 * 0.01).chain([threshold - 1e-4, threshold - 1e-7]).collect();
    let above: Vec<f64> =
        [threshold + 1e-3, threshold + 2e-3, 0.46, 0.5, 0.6, 0.75, 0.9, 1.0, 1.2, 1.5].into_iter().collect();
    let mut bad = Vec::new();
    for &c in &below {
        let v = rank_one_exact_check(&young, &[c; 3], 0.0).unwrap();
        if v.status != Status::Certified || v.method != Method::RankOneExact {
            bad.push(c);
        }
    }
    for &c in &above {
        let v = rank_one_exact_check(&young, &[c; 3], 0.0).unwrap();
        if v.status != Status::Refuted {
            bad.push(c);
        }
    }
    let elapsed = start.elapsed();
    let ok = bad.is_empty() && elapsed < Duration::from_secs(30);
    verdict(
        4,
        ok,
        format!("{} values below and {} above 1/√5 decided, misclassified {bad:?}, runtime {elapsed:.2?}", below.len(), above.len()),
    );
}

#[test]
fn criterion_05_finiteness_direction() {
    let two = Datum::loomis_whitney().unwrap().select(&[0, 1]).unwrap();
    let (beta_min, witness) = beta_min_estimate(&two, &SearchBudget::default()).unwrap();
    let coordinate_line = witness.dim() == 1
        && (0..3).any(|i| principal_angle_distance(&witness, &Subspace::coordinate(3, &[i])).unwrap() < 1e-8);
    let est = bl_limit(&two, &Schedule::decades(6, 8), &OracleOptions::default()).unwrap();
    let last_row: Vec<f64> = est.trace.iter().rev().take(9).map(|p| p.value).collect();
    let increasing = last_row.windows(2).all(|w| w[0] >= w[1]);
    let diverges = est.estimate > 1e3 && increasing;
    let ok = (beta_min - 0.5).abs() < 1e-9 && coordinate_line && diverges;
    verdict(
        5,
        ok,
        format!(
            "beta_min = {beta_min} (expected 0.5), witness dim {} (coordinate line: {coordinate_line}); oracle at ε = 1e-8: {:.3} (> 1e3: {diverges})",
            witness.dim(),
            est.estimate
        ),
    );
}

#[test]
fn criterion_06_localized_exponents() {
    let two = Datum::loomis_whitney().unwrap().select(&[0, 1]).unwrap();
    let beta = 1.0;
    let alphas = [0.5; 2];
    let v = check_perceptivity(&two, &alphas, beta, &SearchBudget::default()).unwrap();
    let ts: Vec<f64> = (0..=6).map(|k| 10f64.powi(-k)).collect();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    let mut oracle = Vec::new();
    for &t in &ts {
        let lrd = LocalizedRegularizedDatum::isotropic(two.clone(), 1.0, t).unwrap();
        upper.push(upper_bound_localized(&lrd, &alphas, beta, &v, false).unwrap().value.finite().unwrap_or(f64::NAN));
        lower.push(lower_bound_localized(&two, t, t.sqrt(), &Subspace::full(3)).unwrap().value.finite().unwrap());
        oracle.push(maximize_gaussian(&lrd, &OracleOptions::default()).unwrap().value);
    }
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let log = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let s_upper = fit_slope(&xs, &log(&upper)).unwrap();
    let s_lower = fit_slope(&xs, &log(&lower)).unwrap();
    let s_oracle = fit_slope(&xs, &log(&oracle)).unwrap();
    let sandwiched = lower.iter().zip(&oracle).zip(&upper).all(|((l, o), u)| l <= o && o <= u);
    let ok = v.is_certified() && (s_upper + beta / 2.0).abs() <= 0.05 && (s_lower + beta / 2.0).abs() <= 0.1 && sandwiched;
    verdict(
        6,
        ok,
        format!(
            "slopes in t: upper {s_upper:.4} (target {:.2} ± 0.05), lower {s_lower:.4} (± 0.1), oracle {s_oracle:.4}; sandwich {sandwiched}",
            -beta / 2.0
        ),
    );
}

/// Critical data that are perceptive at thresholds 1 by construction, in a
/// random orthonormal frame.
fn perceptive_critical(rng: &mut ChaCha8Rng) -> Datum {
    let d = rng.random_range(2..=4usize);
    let o = random_frame(rng, d, d);
    match rng.random_range(0..3) {
        0 => {
            let s = rng.random_range(1.5..3.0);
            Datum::new(vec![LinearMap::new(o.transpose() * s).unwrap()], vec![1.0]).unwrap()
        }
        1 => {
            let o = random_frame(rng, 3, 3);
            let s = rng.random_range(2.0..3.0);
            let maps = [[1, 2], [0, 2], [0, 1]]
                .iter()
                .map(|idx| {
                    let rows = DMatrix::from_fn(2, 3, |r, c| o[(c, idx[r])]);
                    LinearMap::new(rows * s).unwrap()
                })
                .collect();
            Datum::new(maps, vec![0.5; 3]).unwrap()
        }
        _ => {
            let mut cuts = vec![0, d];
            cuts.push(rng.random_range(1..d));
            cuts.sort_unstable();
            cuts.dedup();
            let m = cuts.len() - 1;
            let s = (m as f64).sqrt() + rng.random_range(0.5..2.0);
            let maps = cuts
                .windows(2)
                .map(|w| LinearMap::new(o.columns(w[0], w[1] - w[0]).transpose() * s).unwrap())
                .collect();
            Datum::new(maps, vec![1.0; m]).unwrap()
        }
    }
}

fn random_datum(rng: &mut ChaCha8Rng) -> Datum {
    let d = rng.random_range(1..=5usize);
    let n = rng.random_range(1..=4usize);
    let maps = (0..n)
        .map(|_| {
            let r = rng.random_range(1..=d);
            let scale = rng.random_range(0.2..3.0);
            LinearMap::new(gaussian(rng, r, d) * scale).unwrap()
        })
        .collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    Datum::new(maps, weights).unwrap()
}

#[test]
fn criterion_07_greedy_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let budget = SearchBudget::default();
    let mut failures = 0;
    let mut worst_ratio = f64::INFINITY;
    let mut perceptive_checked = 0;
    for trial in 0..1000 {
        let datum = if trial % 4 == 0 { perceptive_critical(&mut rng) } else { random_datum(&mut rng) };
        let d = datum.ambient_dim();
        let m = random_spd(&mut rng, d);
        let cert = greedy_index_sets(&datum, &m).unwrap();
        let check = cert.verify(&datum).unwrap();
        worst_ratio = worst_ratio.min(check.wedge_ratio);
        if !check.holds() {
            failures += 1;
            continue;
        }
        let full_rank = datum.maps().iter().all(|l| essential_rank(l, 1.0).unwrap() == l.rows());
        if trial % 4 == 0 && is_globally_critical(&datum).0 && full_rank {
            let ones = vec![1.0; datum.len()];
            if check_perceptivity(&datum, &ones, 0.0, &budget).unwrap().is_certified() {
                perceptive_checked += 1;
                let sizes_ok = cert.sizes() == datum.target_dims();
                let tail_ok = (0..d).all(|k| cert.tail_acuity(&datum, k) >= (d - k) as f64 - 1e-9);
                if !(sizes_ok && tail_ok) {
                    failures += 1;
                }
            }
        }
    }
    let ok = failures == 0 && perceptive_checked >= 200;
    verdict(
        7,
        ok,
        format!(
            "1000 certificates, {failures} failures, smallest wedge ratio {worst_ratio:.6}, {perceptive_checked} perceptive critical instances with |I_j| = dim H_j checked"
        ),
    );
}

#[test]
fn criterion_08_determinant_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=6usize);
        let q = random_spd(&mut rng, d);
        let basis: Vec<DVector<f64>> = (0..d).map(|_| gaussian(&mut rng, d, 1).column(0).into_owned()).collect();
        let (lhs, rhs) = match det_bound_check(&q, &basis) {
            Ok(x) => x,
            Err(_) => continue,
        };
        worst = worst.max(lhs / rhs);
        if lhs > rhs * (1.0 + 1e-9) {
            failures += 1;
        }
    }
    verdict(8, failures == 0, format!("1000 instances, {failures} violations, max det Q / bound = {worst:.6}"));
}

#[test]
fn criterion_09_visual_inequality() {
    let start = Instant::now();
    let lines = [Subspace::coordinate(2, &[0]), Subspace::coordinate(2, &[1])];
    let datum = Datum::from_projectors(&lines, vec![1.0, 1.0]).unwrap();
    let alphas = [0.5, 0.5];
    let v = check_perceptivity(&datum, &alphas, 0.0, &SearchBudget::default()).unwrap();
    let safety = 4f64.powi(2);
    let mut ok = v.is_certified();
    let mut fitted: f64 = 0.0;
    let mut constant = 0.0;
    for n in [16, 64, 256] {
        let cloud = PointCloud::slab_grid(2, 2, n).unwrap();
        let r = visual_check(&datum, &cloud, 1.0 / n as f64, &alphas, 0.0, &v, false).unwrap();
        ok &= r.hypotheses_pass() && r.lhs == (n * n) as f64;
        fitted = fitted.max(r.ratio);
        constant = r.constant_estimate;
    }
    ok &= fitted <= safety * constant;
    let mut slopes = Vec::new();
    for (d, k) in [(2, 1), (3, 1), (3, 2), (4, 2)] {
        let e = slab_experiment(d, k, &[8, 16, 32, 64, 128]).unwrap();
        ok &= (e.slope - k as f64).abs() <= 0.15;
        slopes.push(format!("(d={d},k={k}) {:.4}", e.slope));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    verdict(
        9,
        ok,
        format!(
            "fitted constant {fitted:.4} ≤ 4^d·{constant:.4} = {:.1}; slab slopes {}; runtime {elapsed:.2?}",
            safety * constant,
            slopes.join(", ")
        ),
    );
}

#[test]
fn criterion_10_perturbation_stability() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let lw = Datum::loomis_whitney().unwrap();
    let alphas = [0.5; 3];
    let budget = SearchBudget::default();
    let v0 = check_perceptivity(&lw, &alphas, 0.0, &budget).unwrap();
    let base = upper_bound_global(&lw, &alphas, &v0, false).unwrap().value.finite().unwrap();
    let base_variant = upper_bound_variant(&lw, &alphas, &v0, false).unwrap().value.finite().unwrap();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut worst_variant: f64 = 0.0;
    for _ in 0..20 {
        let maps: Vec<LinearMap> = lw
            .maps()
            .iter()
            .map(|l| {
                let e = gaussian(&mut rng, 2, 3);
                let norm = e.singular_values().max();
                LinearMap::new(l.matrix() + e * (1e-3 / norm)).unwrap()
            })
            .collect();
        let datum = Datum::new(maps, vec![0.5; 3]).unwrap();
        let v = check_perceptivity(&datum, &alphas, 0.0, &budget).unwrap();
        let value = upper_bound_global(&datum, &alphas, &v, false).unwrap().value.finite();
        let (proj, _) = blbound::datum::projector_reduction(&datum).unwrap();
        let vp = check_perceptivity(&proj, &alphas, 0.0, &budget).unwrap();
        let variant = upper_bound_variant(&datum, &alphas, &vp, false).unwrap().value.finite();
        match (value, variant) {
            (Some(x), Some(y)) => {
                worst = worst.max((x / base - 1.0).abs());
                worst_variant = worst_variant.max((y / base_variant - 1.0).abs());
            }
            _ => ok = false,
        }
    }
    ok &= worst < 0.01 && worst_variant < 0.01;
    verdict(
        10,
        ok,
        format!("20 perturbations of norm 1e-3 certified at α = 0.5; max relative change {worst:.2e} (global), {worst_variant:.2e} (variant)"),
    );
}
