use std::fs;
use std::path::Path;

use robust_lookback::{BuiltinPayoff, GridSpec, MarginalSystem, PayoffSpec, SimConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Run settings. Every field has a default; the resolved values are echoed
/// into each report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub sim: SimSettings,
    pub payoff: PayoffConfig,
    pub hedge: HedgeConfig,
    pub one_marginal: OneMarginalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    pub refine: usize,
    pub upper: Option<f64>,
    pub extra: Vec<f64>,
    pub value_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let spec = GridSpec::default();
        Self {
            nodes: spec.nodes,
            refine: spec.refine,
            upper: spec.upper,
            extra: spec.extra,
            value_tol: spec.value_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub seed: u64,
    pub n_paths: usize,
    /// Increment variance; `1e-4 spot²` when absent.
    pub step: Option<f64>,
    pub max_steps: u64,
    pub slack: f64,
    /// Rows of the per-path CSV, zero to skip it.
    pub path_rows: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        let sim = SimConfig::for_spot(1.0);
        Self {
            seed: sim.seed,
            n_paths: sim.n_paths,
            step: None,
            max_steps: sim.max_steps,
            slack: sim.slack,
            path_rows: 10_000,
        }
    }
}

/// Lookback payoff `φ(max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    /// One-touch paying 1 when the maximum reaches `level`.
    Digital {
        level: f64,
    },
    /// `min(m, cap)`; the cap defaults to the largest right support.
    CappedLinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// Breakpoints `[m, φ(m)]` of a nondecreasing piecewise-linear `φ`.
    Table {
        points: Vec<(f64, f64)>,
    },
    Constant {
        value: f64,
    },
}

impl Default for PayoffConfig {
    fn default() -> Self {
        Self::CappedLinear { cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HedgeConfig {
    /// Uniform points over the support added to the `λ` table.
    pub uniform_points: usize,
    /// Explicit `x` values replacing the default table grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl Default for HedgeConfig {
    fn default() -> Self {
        Self {
            uniform_points: 201,
            x: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneMarginalConfig {
    /// `identity`, `max`, `drawdown` or `capped_max`.
    pub payoff: String,
    pub cap: Option<f64>,
    /// One-based maturity index; the last one when absent.
    pub maturity: Option<usize>,
    pub diagnostic_points: usize,
}

impl Default for OneMarginalConfig {
    fn default() -> Self {
        Self {
            payoff: "max".into(),
            cap: None,
            maturity: None,
            diagnostic_points: 101,
        }
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("malformed config: {e}")))
    }

    /// Fills the spot-dependent defaults and checks the invariants.
    pub fn resolve(&mut self, system: &MarginalSystem) -> Result<(), Failure> {
        let spot = system.spot();
        let scale = if spot != 0.0 { spot * spot } else { 1.0 };
        self.sim.step.get_or_insert(1e-4 * scale);
        if let PayoffConfig::CappedLinear { cap } = &mut self.payoff {
            cap.get_or_insert(system.max_right_support());
        }
        let n = system.len();
        let i = *self.one_marginal.maturity.get_or_insert(n);
        if i == 0 || i > n {
            return Err(Failure::io(format!("one_marginal.maturity must lie in 1..={n}")));
        }
        if self.one_marginal.payoff == "capped_max" {
            self.one_marginal.cap.get_or_insert(system.curve(i - 1).right_support());
        }

        if self.grid.nodes < 2 || self.grid.refine == 0 {
            return Err(Failure::io("grid needs nodes >= 2 and refine >= 1"));
        }
        if self.grid.value_tol.is_nan() || self.grid.value_tol < 0.0 {
            return Err(Failure::io("grid.value_tol must be nonnegative"));
        }
        if self.sim.n_paths == 0 || self.sim.max_steps == 0 {
            return Err(Failure::io("sim.n_paths and sim.max_steps must be positive"));
        }
        if self.one_marginal.diagnostic_points < 2 {
            return Err(Failure::io("one_marginal.diagnostic_points must be at least 2"));
        }
        if let PayoffConfig::Digital { level } = self.payoff {
            if level.is_nan() || level < spot {
                return Err(Failure::io(format!("digital level {level} lies below the spot {spot}")));
            }
        }
        self.sim_config(spot).validate()?;
        self.payoff_spec(spot)?;
        self.one_marginal_payoff()?;
        Ok(())
    }

    pub fn payoff_spec(&self, spot: f64) -> Result<PayoffSpec, Failure> {
        let spec = match &self.payoff {
            PayoffConfig::Digital { level } => PayoffSpec::digital(*level),
            PayoffConfig::CappedLinear { cap } => {
                let cap = cap.ok_or_else(|| Failure::io("capped_linear cap unresolved"))?;
                PayoffSpec::capped_linear(spot, cap)?
            }
            PayoffConfig::Table { points } => PayoffSpec::from_table(spot, points)?,
            PayoffConfig::Constant { value } => PayoffSpec::constant(*value),
        };
        spec.validate(spot)?;
        Ok(spec)
    }

    /// Grid settings with the payoff's breakpoints added as nodes.
    pub fn grid_spec(&self, payoff: &PayoffSpec) -> GridSpec {
        let mut extra = self.grid.extra.clone();
        extra.extend(payoff.atoms().iter().map(|a| a.0));
        extra.extend(payoff.density().iter().flat_map(|d| [d.start, d.end]));
        let cap = payoff.cap();
        let upper = match self.grid.upper {
            Some(u) if cap.is_finite() => Some(u.max(cap)),
            Some(u) => Some(u),
            None if cap.is_finite() => Some(cap),
            None => None,
        };
        GridSpec {
            nodes: self.grid.nodes,
            refine: self.grid.refine,
            upper,
            extra,
            value_tol: self.grid.value_tol,
        }
    }

    pub fn sim_config(&self, spot: f64) -> SimConfig {
        let mut sim = SimConfig::for_spot(spot);
        sim.seed = self.sim.seed;
        sim.n_paths = self.sim.n_paths;
        if let Some(step) = self.sim.step {
            sim.step = step;
        }
        sim.max_steps = self.sim.max_steps;
        sim.slack = self.sim.slack;
        sim
    }

    pub fn one_marginal_payoff(&self) -> Result<BuiltinPayoff, Failure> {
        Ok(BuiltinPayoff::from_name(
            &self.one_marginal.payoff,
            self.one_marginal.cap,
        )?)
    }
}
