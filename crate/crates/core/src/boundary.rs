//! The ordered minimization `C(m)` over `ζ_1 <= ... <= ζ_n <= m` and the
//! profile of its minimizers across barrier levels.
//!
//! Regrouping the objective by coordinate gives
//! `sum_j (c_j(ζ_j) - c_{j-1}(ζ_j)) / (m - ζ_j)` with `c_0 = 0`, a separable
//! sum under a chain constraint. Each summand is a ratio of two affine maps
//! between consecutive knots of the joint lattice, hence monotone there, so a
//! minimizer exists on the lattice points below `m` and a dynamic program over
//! those points finds the global minimum exactly.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::marginals::{price_scale, MarginalCurve, MarginalSystem};

/// Default tie-breaking window for the lexicographic minimizer choice.
pub const DEFAULT_VALUE_TOL: f64 = 1e-10;

/// Minimizer and value of the ordered problem at one barrier level.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub m: f64,
    /// `ζ*_1 <= ... <= ζ*_n <= m`.
    pub zeta: Vec<f64>,
    /// `C(m)`.
    pub value: f64,
    /// Per-maturity costs `c_i(ζ_i)/(m-ζ_i) - c_i(ζ_{i+1})/(m-ζ_{i+1})`.
    pub terms: Vec<f64>,
}

fn check_zeta(system: &MarginalSystem, m: f64, zeta: &[f64]) -> Result<()> {
    if zeta.len() != system.len() {
        return Err(Error::DimensionMismatch {
            expected: system.len(),
            got: zeta.len(),
        });
    }
    if !m.is_finite() || m < system.spot() {
        return Err(Error::BarrierOutOfRange {
            m,
            lo: system.spot(),
            hi: f64::INFINITY,
        });
    }
    if zeta.iter().any(|z| !z.is_finite()) || zeta.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnorderedZeta);
    }
    let top = zeta[zeta.len() - 1];
    if top > m {
        return Err(Error::ZetaAboveBarrier { zeta: top, m });
    }
    Ok(())
}

/// `c(z) / (m - z)`, continued to `z = m` by its limit from the left.
fn call_ratio(curve: &MarginalCurve, z: f64, m: f64) -> f64 {
    if z < m {
        return curve.call_price(z) / (m - z);
    }
    let eps = 1e-14 * price_scale(curve.spot());
    if curve.call_price(m) > eps {
        f64::INFINITY
    } else {
        -curve.left_slope(m)
    }
}

/// `(c_j - c_{j-1})(z) / (m - z)` with `c_0 = 0`, continued to `z = m`.
fn grouped_ratio(system: &MarginalSystem, j: usize, z: f64, m: f64) -> f64 {
    let cur = system.curve(j);
    if j == 0 {
        return call_ratio(cur, z, m);
    }
    let prev = system.curve(j - 1);
    if z < m {
        return (cur.call_price(z) - prev.call_price(z)) / (m - z);
    }
    let eps = 1e-14 * price_scale(system.spot());
    if cur.call_price(m) - prev.call_price(m) > eps {
        f64::INFINITY
    } else {
        prev.left_slope(m) - cur.left_slope(m)
    }
}

fn terms_of(system: &MarginalSystem, m: f64, zeta: &[f64]) -> Vec<f64> {
    let n = system.len();
    (0..n)
        .map(|i| {
            let c = system.curve(i);
            let own = call_ratio(c, zeta[i], m);
            if i + 1 < n {
                own - call_ratio(c, zeta[i + 1], m)
            } else {
                own
            }
        })
        .collect()
}

/// Objective of the ordered problem at `zeta`, with coordinates equal to `m`
/// understood as limits from below.
pub fn objective(system: &MarginalSystem, m: f64, zeta: &[f64]) -> Result<f64> {
    check_zeta(system, m, zeta)?;
    let terms = terms_of(system, m, zeta);
    let sum: f64 = terms.iter().sum();
    if sum.is_finite() {
        return Ok(sum);
    }
    Ok((0..system.len()).map(|j| grouped_ratio(system, j, zeta[j], m)).sum())
}

fn point_from_zeta(system: &MarginalSystem, m: f64, zeta: Vec<f64>) -> BoundaryPoint {
    let terms = terms_of(system, m, &zeta);
    let mut value: f64 = terms.iter().sum();
    if !value.is_finite() {
        value = (0..system.len()).map(|j| grouped_ratio(system, j, zeta[j], m)).sum();
    }
    BoundaryPoint { m, zeta, value, terms }
}

/// Exact solver for the ordered problem on a fixed marginal system.
#[derive(Debug, Clone)]
pub struct BoundarySolver<'a> {
    system: &'a MarginalSystem,
    lattice: Vec<f64>,
    /// `diffs[j][k] = c_j(z_k) - c_{j-1}(z_k)`.
    diffs: Vec<Vec<f64>>,
    value_tol: f64,
}

impl<'a> BoundarySolver<'a> {
    pub fn new(system: &'a MarginalSystem) -> Self {
        let lattice = system.lattice();
        let calls: Vec<Vec<f64>> = system
            .curves()
            .iter()
            .map(|c| lattice.iter().map(|&z| c.call_price(z)).collect())
            .collect();
        let diffs = (0..system.len())
            .map(|j| {
                if j == 0 {
                    calls[0].clone()
                } else {
                    calls[j].iter().zip(&calls[j - 1]).map(|(a, b)| a - b).collect()
                }
            })
            .collect();
        Self {
            system,
            lattice,
            diffs,
            value_tol: DEFAULT_VALUE_TOL,
        }
    }

    pub fn with_value_tol(mut self, tol: f64) -> Self {
        self.value_tol = tol;
        self
    }

    pub fn system(&self) -> &MarginalSystem {
        self.system
    }

    /// Global minimizer at barrier `m`; among near-optimal vectors (within
    /// the value tolerance) the lexicographically smallest is returned.
    pub fn solve(&self, m: f64) -> Result<BoundaryPoint> {
        let n = self.system.len();
        let spot = self.system.spot();
        if !m.is_finite() || m < spot {
            return Err(Error::BarrierOutOfRange {
                m,
                lo: spot,
                hi: f64::INFINITY,
            });
        }
        let len = self.lattice.partition_point(|&z| z < m);
        if len == 0 {
            // Only reachable when every law is the point mass at the spot.
            return Ok(point_from_zeta(self.system, m, vec![m; n]));
        }
        let z = &self.lattice[..len];
        let g = |j: usize, k: usize| self.diffs[j][k] / (m - z[k]);

        // cost_to_go[j][k]: best cost of coordinates j..n given ζ_j = z_k.
        let mut cost_to_go = vec![vec![0.0; len]; n];
        let mut suffix_min = vec![0.0; len];
        for j in (0..n).rev() {
            let row = &mut cost_to_go[j];
            for k in 0..len {
                let tail = if j + 1 < n { suffix_min[k] } else { 0.0 };
                row[k] = g(j, k) + tail;
            }
            let mut run = f64::INFINITY;
            for k in (0..len).rev() {
                run = run.min(row[k]);
                suffix_min[k] = run;
            }
        }
        let best = cost_to_go[0].iter().copied().fold(f64::INFINITY, f64::min);

        let mut budget = best + self.value_tol;
        let mut from = 0;
        let mut zeta = Vec::with_capacity(n);
        for (j, row) in cost_to_go.iter().enumerate() {
            let k = (from..len)
                .find(|&k| row[k] <= budget)
                .unwrap_or_else(|| (from..len).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(from));
            budget -= g(j, k);
            from = k;
            zeta.push(z[k]);
        }
        Ok(point_from_zeta(self.system, m, zeta))
    }
}

/// Solves the ordered problem at one barrier level.
pub fn solve_boundary(system: &MarginalSystem, m: f64) -> Result<BoundaryPoint> {
    system
        .check_convex_order()
        .map_err(|e| Error::InvalidSystem(e.to_string()))?;
    BoundarySolver::new(system).solve(m)
}

/// Barrier grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Uniform nodes between the spot and the upper end.
    pub nodes: usize,
    /// Subdivision factor for cells across which the minimizer changes.
    pub refine: usize,
    /// Lower bound for the upper end; the largest right support is used otherwise.
    pub upper: Option<f64>,
    /// Levels that must appear as nodes (payoff atoms, density breakpoints).
    pub extra: Vec<f64>,
    /// Objective slack within which the lexicographically smallest minimizer wins.
    pub value_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 512,
            refine: 4,
            upper: None,
            extra: Vec::new(),
            value_tol: DEFAULT_VALUE_TOL,
        }
    }
}

/// `C(m)` and its minimizers tabulated on an increasing barrier grid.
#[derive(Debug, Clone)]
pub struct BoundaryProfile {
    system: Arc<MarginalSystem>,
    m_grid: Vec<f64>,
    points: Vec<BoundaryPoint>,
    value_tol: f64,
}

fn merge_sorted(grid: &mut Vec<f64>) {
    grid.sort_by(f64::total_cmp);
    grid.dedup();
}

impl BoundaryProfile {
    /// Solves at every node of `m_grid`, which must be strictly increasing
    /// and start at the spot.
    pub fn build(system: Arc<MarginalSystem>, m_grid: Vec<f64>) -> Result<Self> {
        system
            .check_convex_order()
            .map_err(|e| Error::InvalidSystem(e.to_string()))?;
        let spot = system.spot();
        if m_grid.len() < 2 {
            return Err(Error::InvalidGrid("at least two nodes are required".into()));
        }
        if m_grid.iter().any(|m| !m.is_finite()) || m_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid(
                "nodes must be finite and strictly increasing".into(),
            ));
        }
        if (m_grid[0] - spot).abs() > 1e-12 * price_scale(spot) {
            return Err(Error::InvalidGrid(format!(
                "grid starts at {} instead of the spot {spot}",
                m_grid[0]
            )));
        }
        let points = {
            let solver = BoundarySolver::new(&system);
            solve_all(&solver, &m_grid)?
        };
        Ok(Self {
            system,
            m_grid,
            points,
            value_tol: DEFAULT_VALUE_TOL,
        })
    }

    /// Uniform grid from the spot to the top of the supports, refined where
    /// the minimizer jumps between neighbouring nodes.
    pub fn build_adaptive(system: Arc<MarginalSystem>, spec: &GridSpec) -> Result<Self> {
        system
            .check_convex_order()
            .map_err(|e| Error::InvalidSystem(e.to_string()))?;
        if spec.nodes < 2 || spec.refine == 0 {
            return Err(Error::InvalidGrid("need at least two nodes and refine >= 1".into()));
        }
        let spot = system.spot();
        let mut hi = system.max_right_support();
        if let Some(u) = spec.upper {
            hi = hi.max(u);
        }
        for &e in &spec.extra {
            hi = hi.max(e);
        }
        if hi <= spot {
            hi = spot + price_scale(spot);
        }
        let step = (hi - spot) / (spec.nodes - 1) as f64;
        let mut coarse: Vec<f64> = (0..spec.nodes).map(|i| spot + step * i as f64).collect();
        coarse[spec.nodes - 1] = hi;
        coarse.extend(spec.extra.iter().copied().filter(|&e| e > spot && e <= hi));
        merge_sorted(&mut coarse);

        if !(spec.value_tol >= 0.0) {
            return Err(Error::InvalidGrid("value_tol must be nonnegative".into()));
        }
        let solver = BoundarySolver::new(&system).with_value_tol(spec.value_tol);
        let coarse_points = solve_all(&solver, &coarse)?;
        let mut fine: Vec<f64> = Vec::new();
        if spec.refine > 1 {
            for (w, p) in coarse.windows(2).zip(coarse_points.windows(2)) {
                if p[0].zeta != p[1].zeta {
                    let h = (w[1] - w[0]) / spec.refine as f64;
                    fine.extend((1..spec.refine).map(|r| w[0] + h * r as f64));
                }
            }
        }
        let fine_points = solve_all(&solver, &fine)?;
        let mut all: Vec<BoundaryPoint> = coarse_points.into_iter().chain(fine_points).collect();
        all.sort_by(|a, b| a.m.total_cmp(&b.m));
        all.dedup_by(|a, b| a.m == b.m);
        let m_grid = all.iter().map(|p| p.m).collect();
        drop(solver);
        Ok(Self {
            system,
            m_grid,
            points: all,
            value_tol: spec.value_tol,
        })
    }

    pub fn system(&self) -> &MarginalSystem {
        &self.system
    }

    /// Solver with the tolerance the profile was built with.
    pub fn solver(&self) -> BoundarySolver<'_> {
        BoundarySolver::new(&self.system).with_value_tol(self.value_tol)
    }

    pub fn system_arc(&self) -> &Arc<MarginalSystem> {
        &self.system
    }

    pub fn m_grid(&self) -> &[f64] {
        &self.m_grid
    }

    pub fn points(&self) -> &[BoundaryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min_m(&self) -> f64 {
        self.m_grid[0]
    }

    pub fn max_m(&self) -> f64 {
        self.m_grid[self.m_grid.len() - 1]
    }

    /// Index `k` of the grid cell `[m_k, m_{k+1})` containing `m`; the last
    /// node maps to the last cell.
    pub fn cell_index(&self, m: f64) -> Result<usize> {
        if !(m >= self.min_m() && m <= self.max_m()) {
            return Err(Error::BarrierOutOfRange {
                m,
                lo: self.min_m(),
                hi: self.max_m(),
            });
        }
        let k = self.m_grid.partition_point(|&x| x <= m);
        Ok(k.saturating_sub(1).min(self.m_grid.len() - 2))
    }

    /// Linear interpolation of `C` on the grid.
    pub fn value_at(&self, m: f64) -> Result<f64> {
        let k = self.cell_index(m)?;
        let (a, b) = (self.m_grid[k], self.m_grid[k + 1]);
        let t = (m - a) / (b - a);
        Ok(self.points[k].value * (1.0 - t) + self.points[k + 1].value * t)
    }

    /// Linear interpolation of `ζ*_i` on the grid (zero-based `i`).
    pub fn zeta_at(&self, i: usize, m: f64) -> Result<f64> {
        let k = self.cell_index(m)?;
        let (a, b) = (self.m_grid[k], self.m_grid[k + 1]);
        let t = (m - a) / (b - a);
        Ok(self.points[k].zeta[i] * (1.0 - t) + self.points[k + 1].zeta[i] * t)
    }

    /// Writes `m, zeta_1..zeta_n, C` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.system.len();
        let mut header = String::from("m");
        for i in 1..=n {
            header.push_str(&format!(",zeta_{i}"));
        }
        header.push_str(",C");
        writeln!(out, "{header}")?;
        for p in &self.points {
            let mut line = format_float(p.m);
            for z in &p.zeta {
                line.push(',');
                line.push_str(&format_float(*z));
            }
            line.push(',');
            line.push_str(&format_float(p.value));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn solve_all(solver: &BoundarySolver<'_>, grid: &[f64]) -> Result<Vec<BoundaryPoint>> {
    grid.par_iter()
        .map(|&m| solver.solve(m).map_err(|e| Error::AtBarrier { m, source: Box::new(e) }))
        .collect()
}

/// Builds a profile on an explicit grid.
pub fn build_profile(system: &MarginalSystem, m_grid: Vec<f64>) -> Result<BoundaryProfile> {
    BoundaryProfile::build(Arc::new(system.clone()), m_grid)
}

/// Seventeen significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
