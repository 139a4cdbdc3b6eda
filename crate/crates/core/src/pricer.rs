//! Lookback payoffs `φ(max)` and their robust price bound.
//!
//! The bound integrates `C(m)` against `φ'(dm)`. Atoms of `φ'` are solved
//! exactly at their level. Densities are split along the profile grid, and on
//! each cell a single minimizer (from the cell midpoint, or the left node when
//! the midpoint one reaches into the cell) is held fixed while the
//! `m`-integral is taken in closed form. Every fixed ordered `ζ` with
//! `ζ_n < m` gives a valid superhedge, so this quadrature over-prices by at
//! most a second-order term and the matching hedge dominates the payoff on
//! every path.

use std::sync::Arc;

use rayon::prelude::*;

use crate::boundary::BoundaryProfile;
use crate::error::{Error, Result};
use crate::marginals::{price_scale, MarginalSystem};

/// A piece `[start, end)` of the density of `φ'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityPiece {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

/// Nondecreasing payoff of the running maximum, `φ(m) = base + φ'([spot, m])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    base: f64,
    atoms: Vec<(f64, f64)>,
    density: Vec<DensityPiece>,
}

impl PayoffSpec {
    pub fn new(base: f64, mut atoms: Vec<(f64, f64)>, mut density: Vec<DensityPiece>) -> Result<Self> {
        if !base.is_finite() {
            return Err(Error::InvalidPayoff("base must be finite".into()));
        }
        if atoms.iter().any(|&(m, w)| !m.is_finite() || !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidPayoff(
                "atoms need finite levels and nonnegative weights".into(),
            ));
        }
        if density.iter().any(|p| {
            !p.start.is_finite() || !p.end.is_finite() || !(p.start < p.end) || !(p.rate >= 0.0) || !p.rate.is_finite()
        }) {
            return Err(Error::InvalidPayoff(
                "density pieces need start < end and a nonnegative rate".into(),
            ));
        }
        atoms.retain(|a| a.1 > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        density.retain(|p| p.rate > 0.0);
        density.sort_by(|a, b| a.start.total_cmp(&b.start));
        if density.windows(2).any(|w| w[1].start < w[0].end) {
            return Err(Error::InvalidPayoff("density pieces overlap".into()));
        }
        Ok(Self { base, atoms, density })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            base: value,
            atoms: Vec::new(),
            density: Vec::new(),
        }
    }

    /// One-touch digital paying one when the maximum reaches `level`.
    pub fn digital(level: f64) -> Self {
        Self {
            base: 0.0,
            atoms: vec![(level, 1.0)],
            density: Vec::new(),
        }
    }

    /// `φ(m) = min(m, cap)` for `cap >= spot`.
    pub fn capped_linear(spot: f64, cap: f64) -> Result<Self> {
        if !(cap >= spot) {
            return Err(Error::InvalidPayoff(format!("cap {cap} lies below the spot {spot}")));
        }
        let density = if cap > spot {
            vec![DensityPiece {
                start: spot,
                end: cap,
                rate: 1.0,
            }]
        } else {
            Vec::new()
        };
        Ok(Self {
            base: spot,
            atoms: Vec::new(),
            density,
        })
    }

    /// Piecewise-linear `φ` through `(m, φ(m))` breakpoints, constant after the
    /// last one. Repeated levels encode jumps. The first breakpoint must lie
    /// at or below the spot.
    pub fn from_table(spot: f64, points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidPayoff("table payoff needs at least one point".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidPayoff("table entries must be finite".into()));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::InvalidPayoff(
                "table must be nondecreasing in level and value".into(),
            ));
        }
        if points[0].0 > spot {
            return Err(Error::InvalidPayoff(
                "first table level must not exceed the spot".into(),
            ));
        }
        // φ(spot), taking the right limit at a jump located at the spot.
        let mut base = points[0].1;
        for w in points.windows(2) {
            let ((a, fa), (b, fb)) = (w[0], w[1]);
            if b <= spot {
                base = fb;
            } else if a < spot {
                base = fa + (fb - fa) * (spot - a) / (b - a);
            }
        }
        let mut atoms = Vec::new();
        let mut density = Vec::new();
        for w in points.windows(2) {
            let ((a, fa), (b, fb)) = (w[0], w[1]);
            if b <= spot || fb == fa {
                continue;
            }
            if a == b {
                atoms.push((a, fb - fa));
            } else {
                density.push(DensityPiece {
                    start: a.max(spot),
                    end: b,
                    rate: (fb - fa) / (b - a),
                });
            }
        }
        Self::new(base, atoms, density)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> &[DensityPiece] {
        &self.density
    }

    pub fn is_constant(&self) -> bool {
        self.atoms.is_empty() && self.density.is_empty()
    }

    /// Right end of the support of `φ'`, or `-inf` for constant payoffs.
    pub fn cap(&self) -> f64 {
        let a = self.atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
        let d = self.density.iter().map(|p| p.end).fold(f64::NEG_INFINITY, f64::max);
        a.max(d)
    }

    /// Checks that `φ'` is carried by `[spot, ∞)`.
    pub fn validate(&self, spot: f64) -> Result<()> {
        let eps = 1e-12 * price_scale(spot);
        if self.atoms.iter().any(|a| a.0 < spot - eps) || self.density.iter().any(|p| p.start < spot - eps) {
            return Err(Error::InvalidPayoff(format!("φ' must be supported on [{spot}, ∞)")));
        }
        Ok(())
    }

    /// `φ(m)` for `m >= spot`.
    pub fn phi(&self, m: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= m).map(|a| a.1).sum();
        let dens: f64 = self
            .density
            .iter()
            .map(|p| p.rate * (m.min(p.end) - p.start).max(0.0))
            .sum();
        self.base + atoms + dens
    }

    /// Total mass of `φ'`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum::<f64>()
            + self.density.iter().map(|p| p.rate * (p.end - p.start)).sum::<f64>()
    }

    /// Nonnegative combination `self + scale * other'` (bases are not added).
    pub fn add_scaled(&self, scale: f64, other: &PayoffSpec) -> Result<Self> {
        // Merge the two piecewise-constant densities on their joint breakpoints.
        let mut cuts: Vec<f64> = self
            .density
            .iter()
            .chain(&other.density)
            .flat_map(|p| [p.start, p.end])
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let rate_at = |d: &[DensityPiece], x: f64| {
            d.iter()
                .filter(|p| p.start <= x && x < p.end)
                .map(|p| p.rate)
                .sum::<f64>()
        };
        let density = cuts
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                DensityPiece {
                    start: w[0],
                    end: w[1],
                    rate: rate_at(&self.density, mid) + scale * rate_at(&other.density, mid),
                }
            })
            .collect();
        let atoms = self
            .atoms
            .iter()
            .copied()
            .chain(other.atoms.iter().map(|&(m, w)| (m, scale * w)))
            .collect();
        Self::new(self.base, atoms, density)
    }
}

/// One element of the discretized `φ'`, with the minimizer used over it.
#[derive(Debug, Clone, PartialEq)]
pub enum BarrierPiece {
    Atom {
        m: f64,
        weight: f64,
        zeta: Vec<f64>,
    },
    Cell {
        lo: f64,
        hi: f64,
        rate: f64,
        zeta: Vec<f64>,
    },
}

impl BarrierPiece {
    pub fn zeta(&self) -> &[f64] {
        match self {
            BarrierPiece::Atom { zeta, .. } | BarrierPiece::Cell { zeta, .. } => zeta,
        }
    }

    /// Lowest barrier level covered.
    pub fn level(&self) -> f64 {
        match *self {
            BarrierPiece::Atom { m, .. } => m,
            BarrierPiece::Cell { lo, .. } => lo,
        }
    }

    /// `∫ φ'(dm) / (m - z)` over the piece.
    pub fn kernel(&self, z: f64) -> f64 {
        self.kernel_between(z, f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `∫ 1{a < m <= b} φ'(dm) / (m - z)` over the piece.
    pub fn kernel_between(&self, z: f64, a: f64, b: f64) -> f64 {
        match *self {
            BarrierPiece::Atom { m, weight, .. } => {
                if a < m && m <= b {
                    if z < m {
                        weight / (m - z)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    0.0
                }
            }
            BarrierPiece::Cell { lo, hi, rate, .. } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    0.0
                } else if z < l {
                    rate * ((h - z) / (l - z)).ln()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `∫ 1{a < m <= b} (m - x) / (m - z) φ'(dm)` over the piece.
    pub fn forward_between(&self, z: f64, x: f64, a: f64, b: f64) -> f64 {
        match *self {
            BarrierPiece::Atom { m, weight, .. } => {
                if a < m && m <= b {
                    if z < m {
                        weight * (m - x) / (m - z)
                    } else {
                        f64::INFINITY
                    }
                } else {
                    0.0
                }
            }
            BarrierPiece::Cell { lo, hi, rate, .. } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    0.0
                } else if z < l {
                    rate * ((h - l) + mul0(z - x, ((h - z) / (l - z)).ln()))
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Product with the convention `0 * inf = 0`.
pub(crate) fn mul0(a: f64, k: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * k
    }
}

/// `φ'` split into atoms and grid cells, each paired with a boundary vector.
#[derive(Debug, Clone)]
pub struct PayoffQuadrature {
    system: Arc<MarginalSystem>,
    /// `φ(X_0)`, including any atom of `φ'` at the spot.
    cash: f64,
    pieces: Vec<BarrierPiece>,
}

impl PayoffQuadrature {
    pub fn new(profile: &BoundaryProfile, payoff: &PayoffSpec) -> Result<Self> {
        let system = profile.system_arc().clone();
        let spot = system.spot();
        payoff.validate(spot)?;
        let cap = payoff.cap();
        let eps = 1e-12 * price_scale(spot);
        if cap > profile.max_m() + eps {
            return Err(Error::CapExceedsProfile {
                cap,
                grid_max: profile.max_m(),
            });
        }

        let mut cash = payoff.base();
        let mut pieces = Vec::new();
        let solver = profile.solver();
        for &(m, weight) in payoff.atoms() {
            if m <= spot + eps {
                cash += weight;
                continue;
            }
            let point = solver.solve(m)?;
            pieces.push(BarrierPiece::Atom {
                m,
                weight,
                zeta: point.zeta,
            });
        }

        let grid = profile.m_grid();
        let points = profile.points();
        let mut cells = Vec::new();
        for piece in payoff.density() {
            let start = piece.start.max(spot);
            let first = grid.partition_point(|&x| x <= start).saturating_sub(1);
            for k in first..grid.len() - 1 {
                if grid[k] >= piece.end {
                    break;
                }
                let lo = grid[k].max(start);
                let hi = grid[k + 1].min(piece.end);
                if hi > lo {
                    cells.push((lo, hi, piece.rate, k));
                }
            }
        }
        // The minimizer at the midpoint is second-order accurate for the
        // hedge; it is only usable while it stays below the whole cell.
        let n = system.len();
        let zetas: Vec<Vec<f64>> = cells
            .par_iter()
            .map(|&(lo, hi, _, k)| {
                let mid = solver.solve(0.5 * (lo + hi))?.zeta;
                Ok(if mid[n - 1] < lo { mid } else { points[k].zeta.clone() })
            })
            .collect::<Result<_>>()?;
        for ((lo, hi, rate, _), zeta) in cells.into_iter().zip(zetas) {
            if let Some(BarrierPiece::Cell {
                hi: prev_hi,
                rate: prev_rate,
                zeta: prev_zeta,
                ..
            }) = pieces.last_mut()
            {
                if *prev_hi == lo && *prev_rate == rate && *prev_zeta == zeta {
                    *prev_hi = hi;
                    continue;
                }
            }
            pieces.push(BarrierPiece::Cell { lo, hi, rate, zeta });
        }
        Ok(Self { system, cash, pieces })
    }

    pub fn system(&self) -> &MarginalSystem {
        &self.system
    }

    pub fn cash(&self) -> f64 {
        self.cash
    }

    pub fn pieces(&self) -> &[BarrierPiece] {
        &self.pieces
    }

    /// `∫ term_i(m) φ'(dm)` for each maturity, via the call prices at the
    /// boundary strikes.
    pub fn maturity_costs(&self) -> Result<Vec<f64>> {
        let n = self.system.len();
        let mut costs = vec![0.0; n];
        for piece in &self.pieces {
            let zeta = piece.zeta();
            for (i, cost) in costs.iter_mut().enumerate() {
                let curve = self.system.curve(i);
                let mut term = mul0(curve.call_price(zeta[i]), piece.kernel(zeta[i]));
                if i + 1 < n {
                    term -= mul0(curve.call_price(zeta[i + 1]), piece.kernel(zeta[i + 1]));
                }
                if !term.is_finite() {
                    return Err(Error::DegenerateBoundary {
                        m: piece.level(),
                        maturity: i + 1,
                    });
                }
                *cost += term;
            }
        }
        Ok(costs)
    }
}

/// One sample of the pricing integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandSample {
    pub m: f64,
    /// `C(m)`.
    pub value: f64,
    /// Density rate of `φ'` at `m`, or the atom weight for atoms.
    pub weight: f64,
    pub is_atom: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceReport {
    /// Robust upper bound `U`.
    pub bound: f64,
    /// `φ(X_0)`.
    pub phi_spot: f64,
    /// Per-maturity static costs `μ_i(λ_i)`.
    pub static_costs: Vec<f64>,
    pub integrand: Vec<IntegrandSample>,
}

/// Price of the one-touch digital at `m`, interpolated on the profile grid.
pub fn price_digital(profile: &BoundaryProfile, m: f64) -> Result<f64> {
    profile.value_at(m)
}

/// Robust bound for `φ(max)`.
pub fn price_lookback(profile: &BoundaryProfile, payoff: &PayoffSpec) -> Result<PriceReport> {
    let quad = PayoffQuadrature::new(profile, payoff)?;
    let static_costs = quad.maturity_costs()?;
    let bound = quad.cash() + static_costs.iter().sum::<f64>();

    let mut integrand: Vec<IntegrandSample> = Vec::new();
    for p in profile.points() {
        let weight: f64 = payoff
            .density()
            .iter()
            .filter(|d| d.start <= p.m && p.m < d.end)
            .map(|d| d.rate)
            .sum();
        if weight > 0.0 {
            integrand.push(IntegrandSample {
                m: p.m,
                value: p.value,
                weight,
                is_atom: false,
            });
        }
    }
    let solver = profile.solver();
    for &(m, weight) in payoff.atoms() {
        let value = solver.solve(m)?.value;
        integrand.push(IntegrandSample {
            m,
            value,
            weight,
            is_atom: true,
        });
    }
    integrand.sort_by(|a, b| a.m.total_cmp(&b.m));

    Ok(PriceReport {
        bound,
        phi_spot: quad.cash(),
        static_costs,
        integrand,
    })
}
