//! The semi-static superhedge: static call positions `λ_i` at each maturity
//! plus stock and forward trades that only change at maturities.
//!
//! Maturity and leg indices are zero-based throughout; errors report them
//! one-based.

use rayon::prelude::*;

use crate::boundary::BoundaryProfile;
use crate::error::{Error, Result};
use crate::marginals::{price_scale, MarginalSystem};
use crate::pricer::{mul0, BarrierPiece, PayoffQuadrature, PayoffSpec};

/// Values and running maxima of a path at the maturities.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSkeleton {
    spot: f64,
    values: Vec<f64>,
    running_max: Vec<f64>,
}

impl PathSkeleton {
    pub fn new(spot: f64, values: Vec<f64>, running_max: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSkeleton("no maturities".into()));
        }
        if values.len() != running_max.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: running_max.len(),
            });
        }
        if !spot.is_finite() || values.iter().chain(&running_max).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSkeleton("entries must be finite".into()));
        }
        let mut floor = spot;
        for (i, (&x, &m)) in values.iter().zip(&running_max).enumerate() {
            floor = floor.max(x);
            if m < floor {
                return Err(Error::InvalidSkeleton(format!(
                    "running maximum {m} at maturity {} is below a visited value {floor}",
                    i + 1
                )));
            }
            floor = m;
        }
        Ok(Self {
            spot,
            values,
            running_max,
        })
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn running_max(&self) -> &[f64] {
        &self.running_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `M_{t_n}`.
    pub fn maximum(&self) -> f64 {
        *self.running_max.last().expect("skeleton is non-empty")
    }

    /// Value before leg `i`, with `X_{t_0} = X_0`.
    fn value_before(&self, i: usize) -> f64 {
        if i == 0 {
            self.spot
        } else {
            self.values[i - 1]
        }
    }

    /// Running maximum before leg `i`, with `M_{t_0} = X_0`.
    fn max_before(&self, i: usize) -> f64 {
        if i == 0 {
            self.spot
        } else {
            self.running_max[i - 1]
        }
    }
}

/// Units held over one leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holdings {
    /// Stock carried from the previous maturity.
    pub stock: f64,
    /// Forward entered when the maximum first reaches a barrier during the leg.
    pub forward: f64,
}

/// Trading rule attached to one atom of `φ'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalRule {
    pub barrier: f64,
    pub weight: f64,
    /// Call strikes of the static position, `ζ*_i(m)`.
    pub strikes: Vec<f64>,
    /// Units of forward sold per unit of weight when the barrier is first hit in leg `i`.
    pub forward_units: Vec<f64>,
    /// Units of stock sold over leg `i` once the barrier has been hit and `X_{t_{i-1}} >= ζ*_i`.
    pub stock_units: Vec<f64>,
    /// Cost of the static position, `C(m)` per unit weight.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct SemiStaticHedge {
    quad: PayoffQuadrature,
    payoff: PayoffSpec,
    /// `K(ζ_i)` per piece and maturity.
    kernels: Vec<Vec<f64>>,
    static_costs: Vec<f64>,
    initial_capital: f64,
}

impl SemiStaticHedge {
    pub fn new(profile: &BoundaryProfile, payoff: &PayoffSpec) -> Result<Self> {
        let quad = PayoffQuadrature::new(profile, payoff)?;
        let kernels = quad
            .pieces()
            .iter()
            .map(|p| p.zeta().iter().map(|&z| p.kernel(z)).collect())
            .collect();
        let mut hedge = Self {
            quad,
            payoff: payoff.clone(),
            kernels,
            static_costs: Vec::new(),
            initial_capital: 0.0,
        };
        let n = hedge.system().len();
        let mut costs = Vec::with_capacity(n);
        for i in 0..n {
            let atoms: Vec<(f64, f64)> = hedge.system().curve(i).atoms().filter(|a| a.1 > 0.0).collect();
            let values: Vec<f64> = atoms
                .par_iter()
                .map(|&(x, w)| hedge.lambda(i, x).map(|l| w * l))
                .collect::<Result<_>>()?;
            costs.push(values.iter().sum());
        }
        hedge.initial_capital = hedge.quad.cash() + costs.iter().sum::<f64>();
        hedge.static_costs = costs;
        Ok(hedge)
    }

    pub fn system(&self) -> &MarginalSystem {
        self.quad.system()
    }

    pub fn payoff(&self) -> &PayoffSpec {
        &self.payoff
    }

    pub fn quadrature(&self) -> &PayoffQuadrature {
        &self.quad
    }

    /// `μ_i(λ_i)` for each maturity.
    pub fn static_costs(&self) -> &[f64] {
        &self.static_costs
    }

    pub fn static_cost(&self) -> f64 {
        self.static_costs.iter().sum()
    }

    /// `φ(X_0) + μ(λ)`.
    pub fn initial_capital(&self) -> f64 {
        self.initial_capital
    }

    /// `φ(X_0)`.
    pub fn cash(&self) -> f64 {
        self.quad.cash()
    }

    /// Static payoff `λ_i(x)` at maturity `i`.
    pub fn lambda(&self, i: usize, x: f64) -> Result<f64> {
        let n = self.system().len();
        if i >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: i + 1,
            });
        }
        let mut total = 0.0;
        for (piece, kern) in self.quad.pieces().iter().zip(&self.kernels) {
            let zeta = piece.zeta();
            let mut v = mul0((x - zeta[i]).max(0.0), kern[i]);
            if i + 1 < n {
                v -= mul0((x - zeta[i + 1]).max(0.0), kern[i + 1]);
            }
            if !v.is_finite() {
                return Err(Error::DegenerateBoundary {
                    m: piece.level(),
                    maturity: i + 1,
                });
            }
            total += v;
        }
        Ok(total)
    }

    /// Rows `[x, λ_1(x), ..., λ_n(x)]`.
    pub fn tabulate(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.system().len();
        xs.par_iter()
            .map(|&x| {
                let mut row = Vec::with_capacity(n + 1);
                row.push(x);
                for i in 0..n {
                    row.push(self.lambda(i, x)?);
                }
                Ok(row)
            })
            .collect()
    }

    /// Union of the curve knots, the boundary strikes of the profile and a
    /// uniform grid over the support.
    pub fn default_x_grid(&self, profile: &BoundaryProfile, uniform_points: usize) -> Vec<f64> {
        let sys = self.system();
        let mut xs: Vec<f64> = sys.curves().iter().flat_map(|c| c.knots().iter().copied()).collect();
        xs.extend(profile.points().iter().flat_map(|p| p.zeta.iter().copied()));
        let (lo, hi) = (sys.min_left_support(), sys.max_right_support());
        if uniform_points > 1 {
            let h = (hi - lo) / (uniform_points - 1) as f64;
            xs.extend((0..uniform_points).map(|k| lo + k as f64 * h));
        }
        xs.retain(|x| x.is_finite());
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    /// Stock and forward units held over leg `i` (covering `(t_{i-1}, t_i]`).
    pub fn holdings(&self, skeleton: &PathSkeleton, i: usize) -> Result<Holdings> {
        self.check_skeleton(skeleton)?;
        if i >= skeleton.len() {
            return Err(Error::DimensionMismatch {
                expected: skeleton.len(),
                got: i + 1,
            });
        }
        let m_prev = skeleton.max_before(i);
        let x_prev = skeleton.value_before(i);
        let m_now = skeleton.running_max[i];
        let mut stock = 0.0;
        let mut forward = 0.0;
        for piece in self.quad.pieces() {
            let z = piece.zeta()[i];
            if i > 0 && x_prev >= z {
                stock -= piece.kernel_between(z, f64::NEG_INFINITY, m_prev);
            }
            forward -= piece.kernel_between(z, m_prev, m_now);
            if !stock.is_finite() || !forward.is_finite() {
                return Err(Error::DegenerateBoundary {
                    m: piece.level(),
                    maturity: i + 1,
                });
            }
        }
        Ok(Holdings { stock, forward })
    }

    /// Terminal value of the hedge along `skeleton`.
    pub fn evaluate(&self, skeleton: &PathSkeleton) -> Result<f64> {
        self.check_skeleton(skeleton)?;
        let n = skeleton.len();
        let mut value = self.initial_capital;
        for i in 0..n {
            value += self.lambda(i, skeleton.values[i])?;
        }
        value -= self.static_cost();
        for i in 0..n {
            let x = skeleton.values[i];
            let x_prev = skeleton.value_before(i);
            let m_prev = skeleton.max_before(i);
            let m_now = skeleton.running_max[i];
            let mut leg = 0.0;
            for piece in self.quad.pieces() {
                let z = piece.zeta()[i];
                leg += piece.forward_between(z, x, m_prev, m_now);
                if i > 0 && x_prev >= z {
                    leg -= mul0(x - x_prev, piece.kernel_between(z, f64::NEG_INFINITY, m_prev));
                }
            }
            if !leg.is_finite() {
                return Err(Error::DegenerateBoundary {
                    m: m_now,
                    maturity: i + 1,
                });
            }
            value += leg;
        }
        Ok(value)
    }

    /// Portfolio value minus payoff for each skeleton, in input order.
    pub fn evaluate_gaps(&self, skeletons: &[PathSkeleton]) -> Result<Vec<f64>> {
        skeletons
            .par_iter()
            .map(|s| Ok(self.evaluate(s)? - self.payoff.phi(s.maximum())))
            .collect()
    }

    /// One rule per atom of `φ'` above the spot.
    pub fn digital_rules(&self) -> Vec<DigitalRule> {
        let sys = self.system();
        self.quad
            .pieces()
            .iter()
            .filter_map(|p| match p {
                BarrierPiece::Atom { m, weight, zeta } => {
                    let units: Vec<f64> = zeta.iter().map(|&z| -1.0 / (m - z)).collect();
                    let mut stock_units = units.clone();
                    stock_units[0] = 0.0;
                    let cost = crate::boundary::objective(sys, *m, zeta).unwrap_or(f64::NAN);
                    Some(DigitalRule {
                        barrier: *m,
                        weight: *weight,
                        strikes: zeta.clone(),
                        forward_units: units,
                        stock_units,
                        cost,
                    })
                }
                BarrierPiece::Cell { .. } => None,
            })
            .collect()
    }

    fn check_skeleton(&self, skeleton: &PathSkeleton) -> Result<()> {
        let sys = self.system();
        if skeleton.len() != sys.len() {
            return Err(Error::DimensionMismatch {
                expected: sys.len(),
                got: skeleton.len(),
            });
        }
        if (skeleton.spot - sys.spot()).abs() > 1e-12 * price_scale(sys.spot()) {
            return Err(Error::InvalidSkeleton(format!(
                "skeleton starts at {} but the system spot is {}",
                skeleton.spot,
                sys.spot()
            )));
        }
        Ok(())
    }
}

pub fn lambda_static(profile: &BoundaryProfile, payoff: &PayoffSpec, i: usize, x: f64) -> Result<f64> {
    SemiStaticHedge::new(profile, payoff)?.lambda(i, x)
}

pub fn static_cost(profile: &BoundaryProfile, payoff: &PayoffSpec) -> Result<Vec<f64>> {
    Ok(SemiStaticHedge::new(profile, payoff)?.static_costs)
}

pub fn dynamic_holdings(
    profile: &BoundaryProfile,
    payoff: &PayoffSpec,
    skeleton: &PathSkeleton,
    leg: usize,
) -> Result<Holdings> {
    SemiStaticHedge::new(profile, payoff)?.holdings(skeleton, leg)
}

pub fn evaluate_portfolio(hedge: &SemiStaticHedge, skeleton: &PathSkeleton) -> Result<f64> {
    hedge.evaluate(skeleton)
}

/// Hedge value of the unit digital at `m` with strikes `zeta`, minus its payoff.
///
/// Works for any ordered `zeta` below `m`, optimal or not.
pub fn check_trajectorial(skeleton: &PathSkeleton, m: f64, zeta: &[f64]) -> Result<f64> {
    let n = skeleton.len();
    if zeta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: zeta.len(),
        });
    }
    if zeta.iter().any(|z| !z.is_finite()) || !m.is_finite() {
        return Err(Error::InvalidSkeleton("barrier and strikes must be finite".into()));
    }
    if zeta.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::UnorderedZeta);
    }
    if zeta[n - 1] >= m {
        return Err(Error::ZetaAboveBarrier { zeta: zeta[n - 1], m });
    }
    if m <= skeleton.spot {
        return Err(Error::BarrierOutOfRange {
            m,
            lo: skeleton.spot,
            hi: f64::INFINITY,
        });
    }
    // Before the first hit each leg contributes a call spread, which is
    // nonnegative below the barrier. At the hitting leg the forward and the
    // call pay exactly the digital plus any shortfall below the strike. After
    // it every leg nets to a nonnegative remainder. Summing these pieces keeps
    // the sign of the residual exact in floating point.
    let d = |i: usize| m - zeta[i];
    let tent = |x: f64, i: usize| {
        let a = zeta[i];
        if x <= a {
            0.0
        } else if i + 1 == n || x < zeta[i + 1] {
            (x - a) / d(i)
        } else {
            (m - x) * (zeta[i + 1] - a) / (d(i) * d(i + 1))
        }
    };
    let hit = (0..n).find(|&i| skeleton.running_max[i] >= m);
    let mut residual = 0.0;
    for i in 0..hit.unwrap_or(n) {
        residual += tent(skeleton.values[i], i);
    }
    if let Some(k) = hit {
        residual += (zeta[k] - skeleton.values[k]).max(0.0) / d(k);
        for (i, w) in skeleton.values.windows(2).enumerate().skip(k) {
            let (prev, x, z) = (w[0], w[1], zeta[i + 1]);
            let g = if prev >= z { (z - x).max(0.0) } else { (x - z).max(0.0) };
            residual += g / d(i + 1);
        }
    }
    Ok(residual)
}
