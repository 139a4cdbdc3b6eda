//! Payoffs `g(X_T, M_T)` of the terminal value and the maximum under a
//! single marginal.
//!
//! The superhedge uses the static claim `λ*` built along the Azéma-Yor
//! boundary and its value is the expectation of `g` under the Azéma-Yor
//! embedding.

use crate::embedding::{ay_sample, mean_stderr, McEstimate, SimConfig};
use crate::error::{Error, Result};
use crate::marginals::{price_scale, MarginalCurve};

/// A payoff `g(x, m)` with its partial derivatives.
pub trait GeneralPayoff: Sync {
    fn g(&self, x: f64, m: f64) -> f64;
    fn g_x(&self, x: f64, m: f64) -> f64;
    fn g_m(&self, x: f64, m: f64) -> f64;

    /// Declared Lipschitz constant in `x`, if any.
    fn lipschitz_x(&self) -> Option<f64> {
        None
    }

    /// Declared Lipschitz constant in `m`, if any.
    fn lipschitz_m(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinPayoff {
    /// `g = x`.
    Identity,
    /// `g = m`.
    Max,
    /// `g = m - x`.
    Drawdown,
    /// `g = min(m, cap)`.
    CappedMax(f64),
}

impl BuiltinPayoff {
    pub fn from_name(name: &str, cap: Option<f64>) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "max" => Ok(Self::Max),
            "drawdown" => Ok(Self::Drawdown),
            "capped_max" => cap
                .map(Self::CappedMax)
                .ok_or_else(|| Error::InvalidPayoff("capped_max needs a cap".into())),
            other => Err(Error::InvalidPayoff(format!("unknown payoff {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Max => "max",
            Self::Drawdown => "drawdown",
            Self::CappedMax(_) => "capped_max",
        }
    }
}

impl GeneralPayoff for BuiltinPayoff {
    fn g(&self, x: f64, m: f64) -> f64 {
        match *self {
            Self::Identity => x,
            Self::Max => m,
            Self::Drawdown => m - x,
            Self::CappedMax(cap) => m.min(cap),
        }
    }

    fn g_x(&self, _x: f64, _m: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Drawdown => -1.0,
            Self::Max | Self::CappedMax(_) => 0.0,
        }
    }

    fn g_m(&self, _x: f64, m: f64) -> f64 {
        match *self {
            Self::Identity => 0.0,
            Self::Max | Self::Drawdown => 1.0,
            Self::CappedMax(cap) => {
                if m < cap {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn lipschitz_x(&self) -> Option<f64> {
        Some(self.g_x(0.0, 0.0).abs())
    }

    fn lipschitz_m(&self) -> Option<f64> {
        Some(match self {
            Self::Identity => 0.0,
            _ => 1.0,
        })
    }
}

type Fn2 = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A payoff given by closures.
pub struct FnPayoff {
    pub g: Fn2,
    pub g_x: Fn2,
    pub g_m: Fn2,
    pub lipschitz_x: Option<f64>,
    pub lipschitz_m: Option<f64>,
}

impl FnPayoff {
    pub fn new(
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        g_m: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            g: Box::new(g),
            g_x: Box::new(g_x),
            g_m: Box::new(g_m),
            lipschitz_x: None,
            lipschitz_m: None,
        }
    }
}

impl GeneralPayoff for FnPayoff {
    fn g(&self, x: f64, m: f64) -> f64 {
        (self.g)(x, m)
    }

    fn g_x(&self, x: f64, m: f64) -> f64 {
        (self.g_x)(x, m)
    }

    fn g_m(&self, x: f64, m: f64) -> f64 {
        (self.g_m)(x, m)
    }

    fn lipschitz_x(&self) -> Option<f64> {
        self.lipschitz_x
    }

    fn lipschitz_m(&self) -> Option<f64> {
        self.lipschitz_m
    }
}

/// `λ*` of one curve and payoff, precomputed for repeated evaluation.
#[derive(Debug, Clone)]
pub struct LambdaStar {
    lo: f64,
    hi: f64,
    /// Atoms with their hazard-weighted `g_m` and running sums of `w` and `w ξ`.
    atoms: Vec<f64>,
    cum_w: Vec<f64>,
    cum_wx: Vec<f64>,
    /// Segments `(a, c]` of constant barycenter `B`, with `∫ g_x(·, B)` up to `a`.
    seg_lo: Vec<f64>,
    seg_bary: Vec<f64>,
    seg_cum: Vec<f64>,
}

impl LambdaStar {
    pub fn new<G: GeneralPayoff + ?Sized>(curve: &MarginalCurve, payoff: &G) -> Self {
        let mut atoms = Vec::new();
        let mut cum_w = Vec::new();
        let mut cum_wx = Vec::new();
        let (mut w_sum, mut wx_sum) = (0.0, 0.0);
        for (xi, a) in curve.atoms().filter(|a| a.1 > 0.0) {
            let tail = curve.survival_closed(xi);
            let w = if tail > 0.0 {
                payoff.g_m(xi, curve.barycenter(xi)) * a / tail
            } else {
                0.0
            };
            w_sum += w;
            wx_sum += w * xi;
            atoms.push(xi);
            cum_w.push(w_sum);
            cum_wx.push(wx_sum);
        }

        let knots = curve.knots();
        let mut seg_lo = Vec::with_capacity(knots.len());
        let mut seg_bary = Vec::with_capacity(knots.len());
        let mut seg_cum = Vec::with_capacity(knots.len());
        let mut total = 0.0;
        for w in knots.windows(2) {
            let bary = curve.barycenter(0.5 * (w[0] + w[1]));
            seg_lo.push(w[0]);
            seg_bary.push(bary);
            seg_cum.push(total);
            total += payoff.g(w[1], bary) - payoff.g(w[0], bary);
        }
        seg_lo.push(curve.right_support());
        seg_bary.push(curve.right_support());
        seg_cum.push(total);

        Self {
            lo: curve.left_support(),
            hi: curve.right_support(),
            atoms,
            cum_w,
            cum_wx,
            seg_lo,
            seg_bary,
            seg_cum,
        }
    }

    /// `λ*(x)` for `x` in `[ℓ, r)`; the degenerate point mass accepts `x = ℓ`.
    pub fn eval<G: GeneralPayoff + ?Sized>(&self, payoff: &G, x: f64) -> Result<f64> {
        if x < self.lo || (x >= self.hi && x != self.lo) || !x.is_finite() {
            return Err(Error::OutOfSupport {
                x,
                lo: self.lo,
                hi: self.hi,
            });
        }
        let k = self.atoms.partition_point(|&a| a <= x);
        let first = if k == 0 {
            0.0
        } else {
            x * self.cum_w[k - 1] - self.cum_wx[k - 1]
        };
        let j = self.seg_lo.partition_point(|&a| a < x);
        let second = if j == 0 {
            0.0
        } else {
            let (a, bary) = (self.seg_lo[j - 1], self.seg_bary[j - 1]);
            self.seg_cum[j - 1] + payoff.g(x, bary) - payoff.g(a, bary)
        };
        Ok(first + second)
    }
}

pub fn lambda_star<G: GeneralPayoff + ?Sized>(curve: &MarginalCurve, payoff: &G, x: f64) -> Result<f64> {
    LambdaStar::new(curve, payoff).eval(payoff, x)
}

/// `γ(x, m) = (m - x) ∂_x [g_m(x, m) / (m - x)]` by central differences.
pub fn gamma<G: GeneralPayoff + ?Sized>(payoff: &G, x: f64, m: f64, h: f64) -> f64 {
    let f = |y: f64| payoff.g_m(y, m) / (m - y);
    (m - x) * (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Rectangle `[x_lo, x_hi] × [m_lo, m_hi]` sampled on an `nx × nm` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub nx: usize,
    pub nm: usize,
}

impl DiagnosticGrid {
    /// Support of the curve times `[spot, r]`, 101 × 101 points.
    pub fn for_curve(curve: &MarginalCurve) -> Self {
        Self {
            x_lo: curve.left_support(),
            x_hi: curve.right_support(),
            m_lo: curve.spot(),
            m_hi: curve.right_support().max(curve.spot() + price_scale(curve.spot())),
            nx: 101,
            nm: 101,
        }
    }

    fn xs(&self) -> Vec<f64> {
        linspace(self.x_lo, self.x_hi, self.nx)
    }

    fn ms(&self) -> Vec<f64> {
        linspace(self.m_lo, self.m_hi, self.nm)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Largest observed `|Δg/Δm|`.
    pub lipschitz_m_observed: f64,
    pub lipschitz_x_observed: f64,
    pub lipschitz_ok: bool,
    /// Rows where `x ↦ g_m(x, m)/(m - x)` decreases, and the largest drop.
    pub monotone_violations: usize,
    pub monotone_max_drop: f64,
    pub monotone_ok: bool,
    /// `max (g - λ*)^+` over the grid.
    pub surplus_max: f64,
    /// Largest excess of the second-difference inequality over its bound.
    pub measure_max_excess: f64,
    pub measure_ok: bool,
    pub warnings: Vec<String>,
}

/// Finite-difference checks of Lipschitz continuity, monotonicity of
/// `g_m/(m - x)`, boundedness of `(g - λ*)^+` and the second-order measure
/// inequality. Advisory only.
pub fn assumption_diagnostics<G: GeneralPayoff + ?Sized>(
    payoff: &G,
    curve: &MarginalCurve,
    grid: &DiagnosticGrid,
) -> AssumptionReport {
    let xs = grid.xs();
    let ms = grid.ms();
    let tol = 1e-9;

    let mut lm: f64 = 0.0;
    let mut lx: f64 = 0.0;
    for &x in &xs {
        for w in ms.windows(2) {
            lm = lm.max(((payoff.g(x, w[1]) - payoff.g(x, w[0])) / (w[1] - w[0])).abs());
        }
    }
    for &m in &ms {
        for w in xs.windows(2) {
            lx = lx.max(((payoff.g(w[1], m) - payoff.g(w[0], m)) / (w[1] - w[0])).abs());
        }
    }
    let mut warnings = Vec::new();
    let mut lipschitz_ok = true;
    if let Some(l) = payoff.lipschitz_m() {
        if lm > l * (1.0 + tol) + tol {
            lipschitz_ok = false;
            warnings.push(format!("observed m-slope {lm} exceeds the declared {l}"));
        }
    }
    if let Some(l) = payoff.lipschitz_x() {
        if lx > l * (1.0 + tol) + tol {
            lipschitz_ok = false;
            warnings.push(format!("observed x-slope {lx} exceeds the declared {l}"));
        }
    }

    let mut monotone_violations = 0;
    let mut monotone_max_drop: f64 = 0.0;
    for &m in &ms {
        let row: Vec<f64> = xs
            .iter()
            .filter(|&&x| x < m)
            .map(|&x| payoff.g_m(x, m) / (m - x))
            .collect();
        let drop = row.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        if drop > tol {
            monotone_violations += 1;
            monotone_max_drop = monotone_max_drop.max(drop);
        }
    }
    let monotone_ok = monotone_violations == 0;
    if !monotone_ok {
        warnings.push(format!("g_m/(m - x) decreases in x on {monotone_violations} rows"));
    }

    let lambda = LambdaStar::new(curve, payoff);
    let mut surplus_max: f64 = 0.0;
    for &x in &xs {
        if let Ok(l) = lambda.eval(payoff, x) {
            for &m in &ms {
                surplus_max = surplus_max.max(payoff.g(x, m) - l);
            }
        }
    }

    let h = if xs.len() > 1 { xs[1] - xs[0] } else { 0.0 };
    let mut measure_max_excess = f64::NEG_INFINITY;
    if h > 0.0 {
        for &m in &ms {
            for &x in xs.iter().take(xs.len() - 1).skip(1) {
                if x + h >= m || x >= curve.right_support() {
                    continue;
                }
                let b = curve.barycenter(x);
                if x + h >= b {
                    continue;
                }
                let dxx = |mm: f64| payoff.g(x + h, mm) - 2.0 * payoff.g(x, mm) + payoff.g(x - h, mm);
                let lhs = (dxx(m) - dxx(b)) / h;
                let rhs = gamma(payoff, x, b, 0.5 * h) * (curve.barycenter(x + h) - curve.barycenter(x - h)) / h;
                measure_max_excess = measure_max_excess.max(lhs - rhs);
            }
        }
    }
    let measure_ok = !(measure_max_excess > tol);
    if !measure_ok {
        warnings.push(format!("second-difference inequality fails by {measure_max_excess}"));
    }

    AssumptionReport {
        lipschitz_m_observed: lm,
        lipschitz_x_observed: lx,
        lipschitz_ok,
        monotone_violations,
        monotone_max_drop,
        monotone_ok,
        surplus_max,
        measure_max_excess: measure_max_excess.max(0.0),
        measure_ok,
        warnings,
    }
}

/// `E[g(X_τ, M_τ)]` under the Azéma-Yor embedding of `curve`.
pub fn value_one_marginal<G: GeneralPayoff + ?Sized>(
    curve: &MarginalCurve,
    payoff: &G,
    config: &SimConfig,
) -> Result<McEstimate> {
    let sample = ay_sample(curve, config)?;
    sample.check_truncation()?;
    let values: Vec<f64> = sample
        .paths
        .iter()
        .map(|p| payoff.g(p.values[0], p.maxima[0]))
        .collect();
    Ok(mean_stderr(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_lambda_is_linear() {
        let curve = fixtures::uniform(0.0, 2.0).unwrap();
        for &x in &[0.0, 0.3, 1.0, 1.99] {
            assert_abs_diff_eq!(
                lambda_star(&curve, &BuiltinPayoff::Identity, x).unwrap(),
                x,
                epsilon = 1e-12
            );
        }
        assert!(matches!(
            lambda_star(&curve, &BuiltinPayoff::Identity, 2.0),
            Err(Error::OutOfSupport { .. })
        ));
        assert!(lambda_star(&curve, &BuiltinPayoff::Identity, -0.1).is_err());
    }

    #[test]
    fn max_lambda_on_uniform() {
        // ∫_0^x ln(2/(2-y)) dy in closed form.
        let curve = fixtures::uniform(0.0, 2.0).unwrap();
        let exact = |x: f64| x + (2.0 - x) * (1.0 - x / 2.0).ln();
        for &x in &[0.25, 1.0, 1.5, 1.9] {
            assert_abs_diff_eq!(
                lambda_star(&curve, &BuiltinPayoff::Max, x).unwrap(),
                exact(x),
                epsilon = 1e-3
            );
        }
    }

    #[test]
    fn dirac_lambda_at_spot() {
        let curve = fixtures::dirac(1.0);
        assert_eq!(lambda_star(&curve, &BuiltinPayoff::Max, 1.0).unwrap(), 0.0);
        assert!(lambda_star(&curve, &BuiltinPayoff::Max, 1.1).is_err());
    }

    #[test]
    fn diagnostics_flag_decreasing_ratio() {
        let curve = fixtures::uniform_with_step(0.0, 2.0, 1e-3).unwrap();
        let grid = DiagnosticGrid::for_curve(&curve);
        for p in [BuiltinPayoff::Max, BuiltinPayoff::Drawdown] {
            let r = assumption_diagnostics(&p, &curve, &grid);
            assert!(r.lipschitz_ok && r.monotone_ok && r.measure_ok, "{p:?}: {r:?}");
        }
        let neg = FnPayoff::new(|_, m| -m, |_, _| 0.0, |_, _| -1.0);
        let r = assumption_diagnostics(&neg, &curve, &grid);
        assert!(!r.monotone_ok);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn builtin_names() {
        assert_eq!(
            BuiltinPayoff::from_name("drawdown", None).unwrap(),
            BuiltinPayoff::Drawdown
        );
        assert_eq!(
            BuiltinPayoff::from_name("capped_max", Some(2.0)).unwrap(),
            BuiltinPayoff::CappedMax(2.0)
        );
        assert!(BuiltinPayoff::from_name("capped_max", None).is_err());
        assert!(BuiltinPayoff::from_name("nope", None).is_err());
    }

    #[test]
    fn one_marginal_value_on_dirac() {
        let curve = fixtures::dirac(1.0);
        let cfg = SimConfig {
            n_paths: 10,
            ..SimConfig::for_spot(1.0)
        };
        let e = value_one_marginal(&curve, &BuiltinPayoff::Drawdown, &cfg).unwrap();
        assert_eq!((e.estimate, e.stderr), (0.0, 0.0));
    }
}
