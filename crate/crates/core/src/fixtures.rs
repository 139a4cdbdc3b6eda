//! Reference marginal systems used by the tests, the CLI examples and the demo.

use rand::Rng;

use crate::error::Result;
use crate::marginals::{CallQuoteGrid, MarginalCurve, MarginalSystem};

/// Default strike spacing of the discretized uniform laws.
pub const UNIFORM_STEP: f64 = 5e-5;

/// Call quotes of the uniform law on `[lo, hi]` at the strikes `i * step`.
///
/// Strikes are integer multiples of `step`, so uniforms built with the same
/// step share their knots.
pub fn uniform_quotes(lo: f64, hi: f64, step: f64) -> CallQuoteGrid {
    let spot = 0.5 * (lo + hi);
    let first = (lo / step).round() as i64;
    let last = (hi / step).round() as i64;
    let width = hi - lo;
    let quotes = (first..=last)
        .map(|i| {
            let k = i as f64 * step;
            let c = if k <= lo {
                spot - k
            } else if k >= hi {
                0.0
            } else {
                (hi - k) * (hi - k) / (2.0 * width)
            };
            (k, c)
        })
        .collect();
    CallQuoteGrid::new(spot, quotes)
}

pub fn uniform_with_step(lo: f64, hi: f64, step: f64) -> Result<MarginalCurve> {
    MarginalCurve::from_quotes(&uniform_quotes(lo, hi, step))
}

/// Uniform law on `[lo, hi]` at the default spacing.
pub fn uniform(lo: f64, hi: f64) -> Result<MarginalCurve> {
    uniform_with_step(lo, hi, UNIFORM_STEP)
}

/// Point mass at `spot`.
pub fn dirac(spot: f64) -> MarginalCurve {
    MarginalCurve::from_atoms(spot, &[(spot, 1.0)]).expect("point mass is a valid law")
}

/// The two-point law on `{lo, hi}` with mean `spot`.
pub fn two_point(lo: f64, hi: f64, spot: f64) -> Result<MarginalCurve> {
    let p_hi = (spot - lo) / (hi - lo);
    MarginalCurve::from_atoms(spot, &[(lo, 1.0 - p_hi), (hi, p_hi)])
}

/// Single-maturity uniform system on `[0, 2]` with spot 1.
pub fn uniform_system() -> Result<MarginalSystem> {
    MarginalSystem::from_curves(1.0, vec![uniform(0.0, 2.0)?])
}

/// Two maturities `U[0.5, 1.5]` then `U[0, 2]`, ordered in convex order and
/// in barycenter.
pub fn ordered_uniform_pair() -> Result<MarginalSystem> {
    MarginalSystem::from_curves(1.0, vec![uniform(0.5, 1.5)?, uniform(0.0, 2.0)?])
}

/// `n` point masses at the spot.
pub fn dirac_system(spot: f64, n: usize) -> Result<MarginalSystem> {
    MarginalSystem::from_curves(spot, vec![dirac(spot); n])
}

fn split_atoms<R: Rng + ?Sized>(rng: &mut R, atoms: &[(f64, f64)], spot: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * atoms.len());
    for &(x, p) in atoms {
        if rng.random_bool(0.25) {
            out.push((x, p));
            continue;
        }
        let down = rng.random_range(0.02..0.3) * spot;
        let up = rng.random_range(0.02..0.3) * spot;
        out.push((x - down, p * up / (up + down)));
        out.push((x + up, p * down / (up + down)));
    }
    out
}

/// A random system of `n` maturities in convex order.
///
/// Each maturity is obtained from the previous one by splitting atoms into
/// mean-preserving pairs, so the chain is a martingale by construction.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, n: usize, spot: f64) -> Result<MarginalSystem> {
    let down = rng.random_range(0.05..0.5) * spot;
    let up = rng.random_range(0.05..0.5) * spot;
    let mut atoms = vec![(spot - down, up / (up + down)), (spot + up, down / (up + down))];
    let mut curves = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            atoms = split_atoms(rng, &atoms, spot);
        }
        // Renormalize the mean exactly onto the spot to absorb rounding.
        let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
        let shifted: Vec<(f64, f64)> = atoms.iter().map(|&(x, p)| (x + spot - mean, p)).collect();
        curves.push(MarginalCurve::from_atoms(spot, &shifted)?);
    }
    MarginalSystem::from_curves(spot, curves)
}

fn random_three_atoms<R: Rng + ?Sized>(rng: &mut R, spot: f64, spread: f64) -> Option<Vec<(f64, f64)>> {
    let mut xs = [
        spot - rng.random_range(0.02..spread) * spot,
        spot + rng.random_range(-0.5..0.5) * spread * spot,
        spot + rng.random_range(0.02..spread) * spot,
    ];
    xs.sort_by(f64::total_cmp);
    if xs[1] - xs[0] < 1e-3 * spot || xs[2] - xs[1] < 1e-3 * spot {
        return None;
    }
    let p2 = rng.random_range(0.05..0.8);
    let p3 = (spot - p2 * xs[1] - (1.0 - p2) * xs[0]) / (xs[2] - xs[0]);
    let p1 = 1.0 - p2 - p3;
    if p1 <= 0.02 || p3 <= 0.02 {
        return None;
    }
    Some(vec![(xs[0], p1), (xs[1], p2), (xs[2], p3)])
}

/// A random convex-ordered system whose curves each carry three atoms.
pub fn random_three_atom_system<R: Rng + ?Sized>(rng: &mut R, n: usize, spot: f64) -> Result<MarginalSystem> {
    'outer: loop {
        let mut curves: Vec<MarginalCurve> = Vec::with_capacity(n);
        let mut spread = 0.3;
        for _ in 0..n {
            let mut accepted = None;
            for _ in 0..2000 {
                let Some(atoms) = random_three_atoms(rng, spot, spread) else {
                    continue;
                };
                let curve = MarginalCurve::from_atoms(spot, &atoms)?;
                let ordered = curves.last().is_none_or(|prev| {
                    let mut ks: Vec<f64> = prev.knots().iter().chain(curve.knots()).copied().collect();
                    ks.sort_by(f64::total_cmp);
                    ks.iter().all(|&k| prev.call_price(k) <= curve.call_price(k) + 1e-12)
                });
                if ordered {
                    accepted = Some(curve);
                    break;
                }
            }
            match accepted {
                Some(c) => curves.push(c),
                None => continue 'outer,
            }
            spread = (spread + 0.25).min(0.95);
        }
        return MarginalSystem::from_curves(spot, curves);
    }
}
