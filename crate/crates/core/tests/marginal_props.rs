use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_lookback::{fixtures, CallQuoteGrid, MarginalCurve};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curves_round_trip_through_their_atoms(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = fixtures::random_system(&mut rng, n, 1.0).unwrap();
        for curve in sys.curves() {
            let atoms: Vec<(f64, f64)> = curve.atoms().collect();
            let mass: f64 = atoms.iter().map(|a| a.1).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
            prop_assert!((curve.mean() - 1.0).abs() < 1e-9);
            let again = MarginalCurve::from_atoms(1.0, &atoms).unwrap();
            for &k in curve.knots() {
                prop_assert!((again.call_price(k) - curve.call_price(k)).abs() < 1e-12);
            }
            let quotes = CallQuoteGrid::new(1.0, curve.knots().iter().map(|&k| (k, curve.call_price(k))).collect());
            let rebuilt = MarginalCurve::from_quotes(&quotes).unwrap();
            prop_assert_eq!(rebuilt.knots().len(), curve.knots().len());
        }
    }

    #[test]
    fn barycenter_and_its_inverse(seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = fixtures::random_system(&mut rng, 1, 1.0).unwrap();
        let c = sys.curve(0);
        let (l, r) = (c.left_support(), c.right_support());
        let x = l + t * (r - l);
        let b = c.barycenter(x);
        prop_assert!(b >= x);
        prop_assert!(b >= 1.0 - 1e-12);
        // The inverse is the largest x with b(x) <= m.
        let m = 1.0 + t * (r - 1.0);
        let inv = c.barycenter_inverse(m);
        prop_assert!(c.barycenter(inv) <= m + 1e-12 || inv == l);
        prop_assert!(c.barycenter(inv + 1e-9) > m - 1e-12 || inv >= r);
        prop_assert!(c.cdf(x) + c.survival(x) == 1.0);
    }
}
