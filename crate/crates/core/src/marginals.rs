//! Call-price curves, the marginal laws they imply and the convex-order check.
//!
//! A [`MarginalCurve`] is piecewise linear in the strike. Its implied law is the
//! discrete measure with an atom at every knot whose mass is the slope jump
//! there, so survival probabilities and the barycenter function are exact at
//! the knots and cheap to evaluate everywhere else.

use crate::error::{Error, Result};

/// Numerical tolerances, all relative to the spot price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed negative slope jump between consecutive quote segments.
    pub convex: f64,
    /// Allowed gap between the implied mean and the spot.
    pub mean: f64,
    /// Allowed decrease of call prices between consecutive maturities.
    pub order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            convex: 1e-9,
            mean: 1e-6,
            order: 1e-9,
        }
    }
}

/// Atoms lighter than this are treated as numerical noise when locating the
/// support endpoints.
const ATOM_EPS: f64 = 1e-13;

pub(crate) fn price_scale(spot: f64) -> f64 {
    if spot.abs() > 0.0 {
        spot.abs()
    } else {
        1.0
    }
}

/// Raw call quotes for a single maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct CallQuoteGrid {
    pub spot: f64,
    /// `(strike, call price)` pairs with strictly increasing strikes.
    pub quotes: Vec<(f64, f64)>,
}

impl CallQuoteGrid {
    pub fn new(spot: f64, quotes: Vec<(f64, f64)>) -> Self {
        Self { spot, quotes }
    }

    /// Samples `price(K)` at the given strikes.
    pub fn from_fn(spot: f64, strikes: &[f64], price: impl Fn(f64) -> f64) -> Self {
        Self {
            spot,
            quotes: strikes.iter().map(|&k| (k, price(k))).collect(),
        }
    }
}

/// A call-price function `K -> c(K)` for one maturity, together with its
/// implied marginal law.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCurve {
    spot: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Slope of segment `j`, between `knots[j]` and `knots[j + 1]`.
    slopes: Vec<f64>,
    /// Atom mass at each knot.
    atoms: Vec<f64>,
}

impl MarginalCurve {
    pub fn from_quotes(grid: &CallQuoteGrid) -> Result<Self> {
        Self::from_quotes_with(grid, &Tolerances::default())
    }

    pub fn from_quotes_with(grid: &CallQuoteGrid, tol: &Tolerances) -> Result<Self> {
        let spot = grid.spot;
        if !spot.is_finite() {
            return Err(Error::InvalidQuotes(format!("spot {spot} is not finite")));
        }
        if grid.quotes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let scale = price_scale(spot);
        let tol_mean = tol.mean * scale;
        let tol_price = tol.convex * scale;

        for (j, &(k, c)) in grid.quotes.iter().enumerate() {
            if !k.is_finite() || !c.is_finite() {
                return Err(Error::InvalidQuotes(format!("non-finite quote at index {j}")));
            }
            if c < -tol_price {
                return Err(Error::InvalidQuotes(format!("negative call price {c} at K = {k}")));
            }
            if j > 0 {
                let (k0, c0) = grid.quotes[j - 1];
                if k <= k0 {
                    return Err(Error::InvalidQuotes(format!(
                        "strikes must be strictly increasing ({k0} then {k})"
                    )));
                }
                if c > c0 + tol_price {
                    return Err(Error::InvalidQuotes(format!(
                        "call prices must be nonincreasing ({c0} at {k0}, {c} at {k})"
                    )));
                }
            }
        }

        let mut knots: Vec<f64> = grid.quotes.iter().map(|q| q.0).collect();
        let mut values: Vec<f64> = grid.quotes.iter().map(|q| q.1.max(0.0)).collect();

        if knots.len() == 1 {
            // A lone quote only pins down a point mass at the spot.
            let (k, c) = (knots[0], values[0]);
            if c > tol_price {
                return Err(Error::UnboundedSupport);
            }
            if (k - spot).abs() > tol_mean {
                return Err(Error::MeanMismatch { implied: k, spot });
            }
            return Ok(Self {
                spot,
                knots: vec![k],
                values: vec![0.0],
                slopes: Vec::new(),
                atoms: vec![1.0],
            });
        }

        let slope = |kn: &[f64], vs: &[f64], j: usize| (vs[j + 1] - vs[j]) / (kn[j + 1] - kn[j]);

        // Left end: mass one with mean equal to the spot.
        let first_slope = slope(&knots, &values, 0);
        if first_slope < -1.0 - tol.convex {
            return Err(Error::NonConvexQuotes {
                strike: knots[0],
                excess: first_slope + 1.0,
            });
        }
        let gap = values[0] - (spot - knots[0]);
        if gap < -tol_mean {
            return Err(Error::MeanMismatch {
                implied: knots[0] + values[0],
                spot,
            });
        }
        if gap > tol_mean {
            let rise = 1.0 + first_slope;
            if rise <= tol.convex {
                return Err(Error::MeanMismatch {
                    implied: knots[0] + values[0],
                    spot,
                });
            }
            let k_left = knots[0] - gap / rise;
            knots.insert(0, k_left);
            values.insert(0, spot - k_left);
        }

        // Right end: extend the last piece down to zero.
        let last = knots.len() - 1;
        let c_last = values[last];
        if c_last > 0.0 {
            let s = slope(&knots, &values, last - 1);
            if c_last <= tol_price && s >= 0.0 {
                values[last] = 0.0;
            } else if s >= 0.0 || -s <= tol.convex {
                return Err(Error::UnboundedSupport);
            } else {
                let k_right = knots[last] + c_last / -s;
                knots.push(k_right);
                values.push(0.0);
            }
        }

        let mut slopes: Vec<f64> = (0..knots.len() - 1).map(|j| slope(&knots, &values, j)).collect();
        for j in 1..slopes.len() {
            let jump = slopes[j] - slopes[j - 1];
            if jump < -tol.convex {
                return Err(Error::NonConvexQuotes {
                    strike: knots[j],
                    excess: jump,
                });
            }
        }
        if let Some(&s) = slopes.last() {
            if s > tol.convex {
                return Err(Error::InvalidQuotes(format!("positive slope {s} at the right end")));
            }
        }

        let atoms_of = |slopes: &[f64]| -> Vec<f64> {
            let n = slopes.len() + 1;
            (0..n)
                .map(|j| {
                    let left = if j == 0 { -1.0 } else { slopes[j - 1] };
                    let right = if j == n - 1 { 0.0 } else { slopes[j] };
                    right - left
                })
                .collect()
        };
        let atoms = atoms_of(&slopes);

        // Trim knots that carry no mass outside [left support, right support].
        let lo = atoms.iter().position(|&a| a > ATOM_EPS).unwrap_or(0);
        let hi = atoms.iter().rposition(|&a| a > ATOM_EPS).unwrap_or(knots.len() - 1);
        knots.truncate(hi + 1);
        values.truncate(hi + 1);
        knots.drain(..lo);
        values.drain(..lo);
        let right_value = values[values.len() - 1];
        if right_value.abs() > tol_mean {
            return Err(Error::UnboundedSupport);
        }
        let last = values.len() - 1;
        values[last] = 0.0;
        slopes = (0..knots.len().saturating_sub(1))
            .map(|j| slope(&knots, &values, j))
            .collect();
        let atoms = atoms_of(&slopes);

        let curve = Self {
            spot,
            knots,
            values,
            slopes,
            atoms,
        };
        let implied = curve.mean();
        if (implied - spot).abs() > tol_mean {
            return Err(Error::MeanMismatch { implied, spot });
        }
        Ok(curve)
    }

    /// Curve of the discrete law `sum_k p_k δ_{x_k}`; the law must have mean `spot`.
    pub fn from_atoms(spot: f64, atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut sorted: Vec<(f64, f64)> = atoms.to_vec();
        if sorted.iter().any(|&(x, p)| !x.is_finite() || !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidQuotes(
                "atoms must be finite with nonnegative mass".into(),
            ));
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (x, p) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += p,
                _ => merged.push((x, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidQuotes(format!("atom masses sum to {total}")));
        }
        let mean: f64 = merged.iter().map(|a| a.0 * a.1).sum();
        if (mean - spot).abs() > Tolerances::default().mean * price_scale(spot) {
            return Err(Error::MeanMismatch { implied: mean, spot });
        }
        let quotes = merged
            .iter()
            .map(|&(k, _)| {
                let c: f64 = merged.iter().map(|&(x, p)| p * (x - k).max(0.0)).sum();
                (k, c)
            })
            .collect();
        Self::from_quotes(&CallQuoteGrid::new(spot, quotes))
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `ℓ^μ`: the largest `x` with `μ([x, ∞)) = 1`.
    pub fn left_support(&self) -> f64 {
        self.knots[0]
    }

    /// `r^μ`: the smallest `x` with `μ((x, ∞)) = 0`.
    pub fn right_support(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Atoms `(location, mass)` of the implied law.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().zip(&self.atoms).map(|(&x, &a)| (x, a.max(0.0)))
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, a)| x * a).sum()
    }

    /// Index of the segment `[knots[j], knots[j + 1])` holding `k`, if any.
    fn segment_right(&self, k: f64) -> Option<usize> {
        if self.knots.len() < 2 || k < self.knots[0] || k >= self.right_support() {
            return None;
        }
        Some(self.knots.partition_point(|&x| x <= k) - 1)
    }

    /// Index of the segment `(knots[j], knots[j + 1]]` holding `x`, if any.
    fn segment_left(&self, x: f64) -> Option<usize> {
        if self.knots.len() < 2 || x <= self.knots[0] || x > self.right_support() {
            return None;
        }
        Some(self.knots.partition_point(|&k| k < x) - 1)
    }

    pub fn call_price(&self, k: f64) -> f64 {
        if k <= self.knots[0] {
            return self.values[0] + (self.knots[0] - k);
        }
        match self.segment_right(k) {
            Some(j) => (self.values[j] + self.slopes[j] * (k - self.knots[j])).max(0.0),
            None => 0.0,
        }
    }

    /// Left derivative of the call function at `k`.
    pub fn left_slope(&self, k: f64) -> f64 {
        if k <= self.knots[0] {
            return -1.0;
        }
        match self.segment_left(k) {
            Some(j) => self.slopes[j],
            None => 0.0,
        }
    }

    /// Right derivative of the call function at `k`.
    pub fn right_slope(&self, k: f64) -> f64 {
        if k < self.knots[0] {
            return -1.0;
        }
        match self.segment_right(k) {
            Some(j) => self.slopes[j],
            None => 0.0,
        }
    }

    /// `μ((K, ∞)) = -c'(K+)`.
    pub fn survival(&self, k: f64) -> f64 {
        (-self.right_slope(k)).clamp(0.0, 1.0)
    }

    /// `μ([x, ∞)) = -c'(x-)`.
    pub fn survival_closed(&self, x: f64) -> f64 {
        (-self.left_slope(x)).clamp(0.0, 1.0)
    }

    /// `μ((-∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// Barycenter `b(x) = E[X | X >= x]` below the right support, `x` above it.
    pub fn barycenter(&self, x: f64) -> f64 {
        if x >= self.right_support() {
            return x;
        }
        let mass = self.survival_closed(x);
        if mass <= 0.0 {
            return x;
        }
        (x + self.call_price(x) / mass).max(x)
    }

    /// Value of `b` on the segment `(knots[j], knots[j + 1]]`, where it is constant.
    fn segment_barycenter(&self, j: usize) -> f64 {
        self.knots[j] + self.values[j] / -self.slopes[j]
    }

    /// Right-continuous generalized inverse `sup{x : b(x) <= m}`.
    ///
    /// Falls back to the left support when `b` never drops to `m`.
    pub fn barycenter_inverse(&self, m: f64) -> f64 {
        let r = self.right_support();
        if m >= r {
            return m;
        }
        // b is constant on each segment and nondecreasing across segments.
        let segs = self.slopes.len();
        let count = partition_point_by(segs, |j| self.segment_barycenter(j) <= m);
        if count == 0 {
            self.knots[0]
        } else {
            self.knots[count]
        }
    }
}

fn partition_point_by(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Call curves for maturities `t_1 < ... < t_n` sharing one spot.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSystem {
    spot: f64,
    curves: Vec<MarginalCurve>,
    times: Vec<f64>,
    tol: Tolerances,
}

/// Worst convex-order violation between maturities `maturity - 1` and `maturity`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairViolation {
    /// One-based index of the later maturity.
    pub maturity: usize,
    /// `max_K c_{i-1}(K) - c_i(K)`, clipped below at zero.
    pub max_violation: f64,
    /// Strike attaining the maximum.
    pub strike: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexOrderReport {
    pub pairs: Vec<PairViolation>,
    pub tolerance: f64,
}

impl ConvexOrderReport {
    pub fn is_valid(&self) -> bool {
        self.pairs.iter().all(|p| p.max_violation <= self.tolerance)
    }

    /// First pair whose violation exceeds the tolerance.
    pub fn first_violation(&self) -> Option<&PairViolation> {
        self.pairs.iter().find(|p| p.max_violation > self.tolerance)
    }
}

impl MarginalSystem {
    pub fn new(spot: f64, curves: Vec<MarginalCurve>, times: Vec<f64>) -> Result<Self> {
        Self::with_tolerances(spot, curves, times, Tolerances::default())
    }

    /// Builds a system with maturities `1, 2, ..., n`.
    pub fn from_curves(spot: f64, curves: Vec<MarginalCurve>) -> Result<Self> {
        let times = (1..=curves.len()).map(|i| i as f64).collect();
        Self::new(spot, curves, times)
    }

    pub fn with_tolerances(spot: f64, curves: Vec<MarginalCurve>, times: Vec<f64>, tol: Tolerances) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::InvalidSystem("at least one maturity is required".into()));
        }
        if times.len() != curves.len() {
            return Err(Error::DimensionMismatch {
                expected: curves.len(),
                got: times.len(),
            });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidSystem("maturities must be strictly increasing".into()));
        }
        let tol_mean = tol.mean * price_scale(spot);
        for (i, c) in curves.iter().enumerate() {
            if (c.spot() - spot).abs() > tol_mean {
                return Err(Error::InvalidSystem(format!(
                    "curve {} has spot {} but the system spot is {spot}",
                    i + 1,
                    c.spot()
                )));
            }
        }
        Ok(Self {
            spot,
            curves,
            times,
            tol,
        })
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[MarginalCurve] {
        &self.curves
    }

    pub fn curve(&self, i: usize) -> &MarginalCurve {
        &self.curves[i]
    }

    pub fn last(&self) -> &MarginalCurve {
        &self.curves[self.curves.len() - 1]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn min_left_support(&self) -> f64 {
        self.curves
            .iter()
            .map(MarginalCurve::left_support)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_right_support(&self) -> f64 {
        self.curves
            .iter()
            .map(MarginalCurve::right_support)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sorted union of the knots of every curve.
    pub fn lattice(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.curves.iter().flat_map(|c| c.knots().iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Per consecutive pair, the largest amount by which the earlier call
    /// price exceeds the later one.
    ///
    /// Both curves are linear between their joint knots and agree outside
    /// the joint support, so the maximum over all strikes sits on a knot.
    pub fn validate_convex_order(&self) -> ConvexOrderReport {
        let pairs = self
            .curves
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut ks: Vec<f64> = w[0].knots().iter().chain(w[1].knots()).copied().collect();
                ks.sort_by(f64::total_cmp);
                ks.dedup();
                let (strike, diff) = ks.iter().map(|&k| (k, w[0].call_price(k) - w[1].call_price(k))).fold(
                    (ks[0], f64::NEG_INFINITY),
                    |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    },
                );
                PairViolation {
                    maturity: i + 2,
                    max_violation: diff.max(0.0),
                    strike,
                }
            })
            .collect();
        ConvexOrderReport {
            pairs,
            tolerance: self.tol.order * price_scale(self.spot),
        }
    }

    /// Errors with the first offending pair when the calls are not ordered.
    pub fn check_convex_order(&self) -> Result<()> {
        let report = self.validate_convex_order();
        match report.first_violation() {
            Some(v) => Err(Error::ConvexOrderViolation {
                maturity: v.maturity,
                strike: v.strike,
                excess: v.max_violation,
            }),
            None => Ok(()),
        }
    }
}
