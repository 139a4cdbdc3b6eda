use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_lookback::boundary::{BoundaryProfile, GridSpec};
use robust_lookback::hedge::{check_trajectorial, PathSkeleton, SemiStaticHedge};
use robust_lookback::pricer::{price_lookback, PayoffSpec};
use robust_lookback::{fixtures, MarginalSystem};
use std::sync::Arc;

/// Draws a skeleton whose entries are often snapped onto `specials`.
fn random_skeleton<R: Rng>(rng: &mut R, spot: f64, n: usize, lo: f64, hi: f64, specials: &[f64]) -> PathSkeleton {
    let pick = |rng: &mut R, a: f64, b: f64| {
        if !specials.is_empty() && rng.random_bool(0.3) {
            let s = specials[rng.random_range(0..specials.len())];
            if s >= a && s <= b {
                return s;
            }
        }
        rng.random_range(a..=b)
    };
    let mut values = Vec::with_capacity(n);
    let mut maxima = Vec::with_capacity(n);
    let mut top = spot;
    for _ in 0..n {
        let x = pick(rng, lo, hi);
        top = top.max(x);
        if rng.random_bool(0.5) {
            top = pick(rng, top, hi.max(top));
        }
        values.push(x);
        maxima.push(top);
    }
    PathSkeleton::new(spot, values, maxima).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn trajectorial_residual_is_nonnegative(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1.0001..2.0);
        let mut zeta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..m)).collect();
        zeta.sort_by(f64::total_cmp);
        let specials: Vec<f64> = zeta.iter().copied().chain([m, 1.0]).collect();
        let s = random_skeleton(&mut rng, 1.0, n, 0.0, 2.5, &specials);
        let r = check_trajectorial(&s, m, &zeta).unwrap();
        prop_assert!(r >= -1e-12, "residual {r} for {s:?} m={m} zeta={zeta:?}");
    }

    #[test]
    fn appending_a_leg_after_the_hit(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(1.0001..2.0);
        let mut zeta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..m)).collect();
        zeta.sort_by(f64::total_cmp);
        let s = random_skeleton(&mut rng, 1.0, n, 0.0, 2.5, &zeta);
        prop_assume!(s.running_max()[n - 2] >= m);
        let short = PathSkeleton::new(1.0, s.values()[..n - 1].to_vec(), s.running_max()[..n - 1].to_vec()).unwrap();
        let full = check_trajectorial(&s, m, &zeta).unwrap();
        let part = check_trajectorial(&short, m, &zeta[..n - 1]).unwrap();
        let (xn, xp, zn) = (s.values()[n - 1], s.values()[n - 2], zeta[n - 1]);
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        let step = (xn - zn) / (m - zn) * (ind(xn >= zn) - ind(xp >= zn));
        prop_assert!((full - part - step).abs() <= 1e-12 * (1.0 + full.abs()), "{full} {part} {step}");
        prop_assert!(step >= 0.0);
    }
}

fn profile_of(sys: MarginalSystem) -> BoundaryProfile {
    let spec = GridSpec {
        nodes: 128,
        refine: 2,
        ..Default::default()
    };
    BoundaryProfile::build_adaptive(Arc::new(sys), &spec).unwrap()
}

#[test]
fn hedge_superreplicates_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..6 {
        let n = rng.random_range(1..=3);
        let profile = profile_of(fixtures::random_system(&mut rng, n, 1.0).unwrap());
        let sys = profile.system();
        let (lo, hi) = (sys.min_left_support(), sys.max_right_support());
        let level = rng.random_range(1.0..hi);
        for payoff in [
            PayoffSpec::digital(level),
            PayoffSpec::capped_linear(1.0, level).unwrap(),
        ] {
            let hedge = SemiStaticHedge::new(&profile, &payoff).unwrap();
            let price = price_lookback(&profile, &payoff).unwrap();
            let scale = price.bound.abs().max(1.0);
            assert!((hedge.initial_capital() - price.bound).abs() <= 1e-9 * scale);
            let mut specials: Vec<f64> = sys.lattice();
            specials.push(level);
            let skeletons: Vec<PathSkeleton> = (0..2000)
                .map(|_| random_skeleton(&mut rng, 1.0, n, lo - 0.1, hi + 0.1, &specials))
                .collect();
            for (s, gap) in skeletons.iter().zip(hedge.evaluate_gaps(&skeletons).unwrap()) {
                assert!(gap >= -1e-9, "gap {gap} on {s:?}");
            }
        }
    }
}

#[test]
fn static_cost_of_digital_is_the_boundary_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=3 {
        let profile = profile_of(fixtures::random_system(&mut rng, n, 1.0).unwrap());
        let m = 0.5 * (1.0 + profile.system().max_right_support());
        let hedge = SemiStaticHedge::new(&profile, &PayoffSpec::digital(m)).unwrap();
        let c = robust_lookback::solve_boundary(profile.system(), m).unwrap().value;
        assert!((hedge.static_cost() - c).abs() < 1e-12);
        assert!((hedge.initial_capital() - c).abs() < 1e-12);
    }
}

#[test]
fn costs_are_linear_in_the_payoff() {
    let profile = profile_of(fixtures::ordered_uniform_pair().unwrap());
    let a = PayoffSpec::capped_linear(1.0, 1.8).unwrap();
    let b = PayoffSpec::digital(1.4);
    let sum = a.add_scaled(2.0, &b).unwrap();
    let ua = price_lookback(&profile, &a).unwrap().bound;
    let ub = price_lookback(&profile, &b).unwrap().bound;
    let us = price_lookback(&profile, &sum).unwrap().bound;
    assert!((us - (ua + 2.0 * ub)).abs() < 1e-9);
}
