mod common;

use blbound::datum::{
    essential_acuity, exponential_entropy, gram_norm, projector_reduction, LocalizedRegularizedDatum,
};
use blbound::linalg::{SpdMatrix, Subspace};
use common::*;
use proptest::prelude::*;
use rand::Rng;


proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn acuity_is_monotone_in_thresholds_and_vanishes_on_zero(seed in any::<u64>(), d in 1usize..5, n in 1usize..5) {
        let mut rng = rng(seed);
        let datum = random_datum(&mut rng, d, n);
        let k = rng.random_range(0..=d);
        let w = random_subspace(&mut rng, d, k);
        let lo: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|a| a + rng.random_range(0.0..1.0)).collect();
        let a_lo = essential_acuity(&datum, &lo, &w).unwrap();
        let a_hi = essential_acuity(&datum, &hi, &w).unwrap();
        prop_assert!(a_hi <= a_lo + 1e-12);
        prop_assert_eq!(essential_acuity(&datum, &lo, &Subspace::zero(d)).unwrap(), 0.0);
    }

    #[test]
    fn entropy_is_bounded(seed in any::<u64>(), d in 1usize..5, n in 1usize..6) {
        let mut rng = rng(seed);
        let datum = random_datum(&mut rng, d, n);
        let dims: usize = datum.target_dims().iter().sum();
        let e = exponential_entropy(&datum);
        prop_assert!(e >= 1.0 - 1e-12);
        prop_assert!(e <= (dims as f64 / (2.0 * std::f64::consts::E)).exp() * (1.0 + 1e-12));
    }

    #[test]
    fn projector_reduction_is_idempotent(seed in any::<u64>(), d in 1usize..5, n in 1usize..5) {
        let mut rng = rng(seed);
        let datum = random_datum(&mut rng, d, n);
        let (reduced, upsilon) = projector_reduction(&datum).unwrap();
        prop_assert!(upsilon.is_finite() && upsilon > 0.0);
        prop_assert!(reduced.is_projector_datum());
        for (l, p) in datum.maps().iter().zip(reduced.maps()) {
            let k1 = l.kernel();
            let k2 = p.kernel();
            prop_assert_eq!(k1.dim(), k2.dim());
            prop_assert!(k1.contains(&k2, 1e-8) && k2.contains(&k1, 1e-8));
        }
        let (again, one) = projector_reduction(&reduced).unwrap();
        prop_assert!((one - 1.0).abs() < 1e-9, "{}", one);
        for (p, q) in reduced.maps().iter().zip(again.maps()) {
            prop_assert!(p.kernel().contains(&q.kernel(), 1e-8));
        }
    }

    #[test]
    fn gram_norm_dominates_localization_and_grows(seed in any::<u64>(), d in 1usize..5, n in 1usize..4) {
        let mut rng = rng(seed);
        let datum = random_datum(&mut rng, d, n);
        let regs: Vec<SpdMatrix> = datum.target_dims().iter().map(|&r| random_spd(&mut rng, r)).collect();
        let loc = random_spd(&mut rng, d);
        let base = LocalizedRegularizedDatum::new(datum.clone(), regs.clone(), loc.clone()).unwrap();
        let n0 = gram_norm(&base);
        prop_assert!(n0 >= loc.max_eigenvalue() * (1.0 - 1e-12));
        let j = rng.random_range(0..n);
        let v = unit_vector(&mut rng, regs[j].dim());
        let mut bumped = regs.clone();
        bumped[j] = SpdMatrix::new(regs[j].matrix() + &v * v.transpose()).unwrap();
        let n1 = gram_norm(&LocalizedRegularizedDatum::new(datum, bumped, loc).unwrap());
        prop_assert!(n1 >= n0 * (1.0 - 1e-12), "{} < {}", n1, n0);
    }
}
