use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_lookback::boundary::{objective, solve_boundary, BoundaryProfile, GridSpec};
use robust_lookback::fixtures;
use robust_lookback::MarginalCurve;
use std::sync::Arc;

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    f(0.5 * (a + b))
}

/// Exhaustive search over ordered tuples on a uniform grid below `m`.
fn grid_oracle(curves: &[MarginalCurve], m: f64, lo: f64, step: f64) -> f64 {
    let pts: Vec<f64> = (0..).map(|k| lo + k as f64 * step).take_while(|&z| z < m).collect();
    let tables: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| pts.iter().map(|&z| c.call_price(z)).collect())
        .collect();
    let inv: Vec<f64> = pts.iter().map(|&z| 1.0 / (m - z)).collect();
    let n = curves.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; n];
    loop {
        let mut v = 0.0;
        for i in 0..n {
            v += tables[i][idx[i]] * inv[idx[i]];
            if i + 1 < n {
                v -= tables[i][idx[i + 1]] * inv[idx[i + 1]];
            }
        }
        best = best.min(v);
        // Next ordered tuple.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] + 1 < pts.len() {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[k];
                }
                break;
            }
        }
    }
}

#[test]
fn single_marginal_matches_golden_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let sys = fixtures::random_system(&mut rng, 1, 1.0).unwrap();
        let curve = sys.curve(0);
        let (l, r) = (curve.left_support(), curve.right_support());
        for k in 1..8 {
            let m = 1.0 + (r - 1.0) * k as f64 / 8.0;
            let got = solve_boundary(&sys, m).unwrap().value;
            let oracle = golden_min(|z| curve.call_price(z) / (m - z), l, m - 1e-9);
            assert!((got - oracle).abs() < 1e-7, "m={m}: {got} vs {oracle}");
        }
    }
}

#[test]
fn multi_marginal_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 2..=3 {
        for _ in 0..4 {
            let sys = fixtures::random_three_atom_system(&mut rng, n, 1.0).unwrap();
            let lo = sys.min_left_support();
            let hi = sys.max_right_support();
            for k in 1..5 {
                let m = 1.0 + (hi - 1.0) * k as f64 / 5.0;
                let got = solve_boundary(&sys, m).unwrap();
                let oracle = grid_oracle(sys.curves(), m, lo, 1e-2);
                assert!(got.value <= oracle + 1e-12, "n={n} m={m}: {} > {oracle}", got.value);
                assert!(oracle - got.value < 2e-2, "n={n} m={m}: {} vs {oracle}", got.value);
                let at = objective(&sys, m, &got.zeta).unwrap();
                assert!((at - got.value).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn uniform_boundary_is_the_tangent_line() {
    let sys = Arc::new(fixtures::uniform_system().unwrap());
    let profile = BoundaryProfile::build_adaptive(sys, &GridSpec::default()).unwrap();
    for p in profile.points() {
        if p.m >= 1.05 && p.m <= 1.95 {
            assert!((p.zeta[0] - (2.0 * p.m - 2.0)).abs() <= 1e-4);
            assert!((p.value - (2.0 - p.m)).abs() <= 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn value_is_bracketed(seed in any::<u64>(), n in 1usize..=3, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = fixtures::random_system(&mut rng, n, 1.0).unwrap();
        let r = sys.max_right_support();
        let m = 1.0 + t * (r - 1.0) + 1e-9;
        let p = solve_boundary(&sys, m).unwrap();
        prop_assert!(p.value >= sys.last().survival_closed(m) - 1e-12);
        prop_assert!(p.value < 1.0);
        prop_assert!(p.zeta.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.zeta.iter().all(|&z| z <= m));
        prop_assert!((p.terms.iter().sum::<f64>() - p.value).abs() < 1e-12);
    }

    #[test]
    fn value_is_nonincreasing_in_the_barrier(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = fixtures::random_system(&mut rng, n, 1.0).unwrap();
        let r = sys.max_right_support();
        let mut prev = 1.0 + 1e-12;
        for k in 0..=20 {
            let m = 1.0 + (r + 0.1 - 1.0) * k as f64 / 20.0;
            let v = solve_boundary(&sys, m).unwrap().value;
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }
}
