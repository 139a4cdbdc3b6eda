use std::sync::Arc;

use robust_lookback::boundary::format_float;
use robust_lookback::embedding::{iterated_stop, marginal_fit, payoff_estimate, superhedge_equality};
use robust_lookback::pricer::BarrierPiece;
use robust_lookback::single_marginal::{DiagnosticGrid, LambdaStar};
use robust_lookback::{
    assumption_diagnostics, price_lookback, value_one_marginal, BoundaryProfile, MarginalSystem, PayoffSpec,
    SemiStaticHedge,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::input::MarketInput;
use crate::{Artifact, Cli, Command, Failure, Outcome, EXIT_ARBITRAGE};

pub fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let path = cli.input.as_deref().ok_or_else(|| Failure::io("--input is required"))?;
    let input = MarketInput::read(path)?;
    if cli.command == Command::Validate {
        return validate(&input);
    }
    let system = input.system()?;
    if let Some(message) = order_violation(&system) {
        return Err(Failure {
            code: EXIT_ARBITRAGE,
            message,
        });
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.sim.seed = seed;
    }
    config.resolve(&system)?;
    let ctx = Context {
        input,
        system: Arc::new(system),
        config,
    };
    match cli.command {
        Command::Validate => unreachable!("handled above"),
        Command::Price => ctx.price(),
        Command::Profile => ctx.profile(),
        Command::HedgeTable => ctx.hedge_table(),
        Command::Simulate => ctx.simulate(),
        Command::OneMarginal => ctx.one_marginal(),
    }
}

fn order_violation(system: &MarginalSystem) -> Option<String> {
    system
        .validate_convex_order()
        .first_violation()
        .map(|v| format!("convex order violated at t_{}, K={}", v.maturity, v.strike))
}

#[derive(Serialize)]
struct PairJson {
    maturity: usize,
    strike: f64,
    max_violation: f64,
}

#[derive(Serialize)]
struct ValidateReport {
    command: &'static str,
    valid: bool,
    spot: f64,
    times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    pairs: Vec<PairJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

fn validate(input: &MarketInput) -> Result<Outcome, Failure> {
    let mut report = ValidateReport {
        command: "validate",
        valid: false,
        spot: input.spot,
        times: input.times(),
        tolerance: None,
        pairs: Vec::new(),
        message: None,
    };
    match input.system() {
        Ok(system) => {
            let order = system.validate_convex_order();
            report.valid = order.is_valid();
            report.tolerance = Some(order.tolerance);
            report.pairs = order
                .pairs
                .iter()
                .map(|p| PairJson {
                    maturity: p.maturity,
                    strike: p.strike,
                    max_violation: p.max_violation,
                })
                .collect();
            report.message = order_violation(&system);
        }
        Err(f) if f.code == EXIT_ARBITRAGE => report.message = Some(f.message),
        Err(f) => return Err(f),
    }
    let code = if report.valid { 0 } else { EXIT_ARBITRAGE };
    Ok(Outcome {
        artifacts: vec![json_artifact("validate.json", &report)],
        code,
        message: report.message.clone(),
    })
}

struct Context {
    input: MarketInput,
    system: Arc<MarginalSystem>,
    config: RunConfig,
}

#[derive(Serialize)]
struct InputSummary {
    spot: f64,
    times: Vec<f64>,
}

#[derive(Serialize)]
struct GridSummary {
    points: usize,
    min_m: f64,
    max_m: f64,
    upper: Option<f64>,
    extra: Vec<f64>,
}

#[derive(Serialize)]
struct CostIdentity {
    /// `μ_i(λ_i)` integrated from the static positions.
    hedge_static_costs: Vec<f64>,
    /// `φ(X_0) + Σ μ_i(λ_i)`.
    total: f64,
    residual: f64,
    relative: f64,
}

#[derive(Serialize)]
struct PriceJson<'a> {
    command: &'static str,
    config: &'a RunConfig,
    input: InputSummary,
    grid: GridSummary,
    #[serde(rename = "U")]
    bound: f64,
    phi_spot: f64,
    static_costs: Vec<f64>,
    cost_identity: CostIdentity,
}

#[derive(Serialize)]
struct RuleJson {
    barrier: f64,
    weight: f64,
    strikes: Vec<f64>,
    forward_units: Vec<f64>,
    stock_units: Vec<f64>,
    cost: f64,
}

#[derive(Serialize)]
struct CellJson {
    lo: f64,
    hi: f64,
    rate: f64,
    strikes: Vec<f64>,
}

#[derive(Serialize)]
struct HoldingsJson<'a> {
    command: &'static str,
    config: &'a RunConfig,
    initial_capital: f64,
    cash: f64,
    static_costs: Vec<f64>,
    /// One rule per barrier atom of `φ'`.
    digital_rules: Vec<RuleJson>,
    /// Density of `φ'`, with the strikes held fixed on each cell.
    cells: Vec<CellJson>,
}

#[derive(Serialize)]
struct KsRow {
    maturity: usize,
    time: f64,
    ks: f64,
}

#[derive(Serialize)]
struct GapJson {
    mean: f64,
    min: f64,
    max: f64,
    count: usize,
}

#[derive(Serialize)]
struct SimulateJson<'a> {
    command: &'static str,
    config: &'a RunConfig,
    bound: f64,
    estimate: f64,
    stderr: f64,
    samples: usize,
    n_paths: usize,
    truncated: usize,
    marginal_fit: Vec<KsRow>,
    gaps: GapJson,
}

#[derive(Serialize)]
struct DiagnosticsJson {
    lipschitz_m_observed: f64,
    lipschitz_x_observed: f64,
    lipschitz_ok: bool,
    monotone_violations: usize,
    monotone_max_drop: f64,
    monotone_ok: bool,
    surplus_max: f64,
    measure_max_excess: f64,
    measure_ok: bool,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct OneMarginalJson<'a> {
    command: &'static str,
    config: &'a RunConfig,
    maturity: usize,
    time: f64,
    payoff: &'static str,
    estimate: f64,
    stderr: f64,
    samples: usize,
    diagnostics: DiagnosticsJson,
}

impl Context {
    fn spot(&self) -> f64 {
        self.system.spot()
    }

    fn payoff(&self) -> Result<PayoffSpec, Failure> {
        self.config.payoff_spec(self.spot())
    }

    fn build_profile(&self, payoff: &PayoffSpec) -> Result<BoundaryProfile, Failure> {
        Ok(BoundaryProfile::build_adaptive(
            self.system.clone(),
            &self.config.grid_spec(payoff),
        )?)
    }

    fn grid_summary(&self, profile: &BoundaryProfile, payoff: &PayoffSpec) -> GridSummary {
        let spec = self.config.grid_spec(payoff);
        GridSummary {
            points: profile.len(),
            min_m: profile.min_m(),
            max_m: profile.max_m(),
            upper: spec.upper,
            extra: spec.extra,
        }
    }

    fn price(&self) -> Result<Outcome, Failure> {
        let payoff = self.payoff()?;
        let profile = self.build_profile(&payoff)?;
        let report = price_lookback(&profile, &payoff)?;
        let hedge = SemiStaticHedge::new(&profile, &payoff)?;
        let total = report.phi_spot + hedge.static_costs().iter().sum::<f64>();
        let residual = total - report.bound;
        let json = PriceJson {
            command: "price",
            config: &self.config,
            input: InputSummary {
                spot: self.spot(),
                times: self.input.times(),
            },
            grid: self.grid_summary(&profile, &payoff),
            bound: report.bound,
            phi_spot: report.phi_spot,
            static_costs: report.static_costs.clone(),
            cost_identity: CostIdentity {
                hedge_static_costs: hedge.static_costs().to_vec(),
                total,
                residual,
                relative: residual.abs() / report.bound.abs().max(f64::MIN_POSITIVE),
            },
        };
        let mut integrand = String::from("m,C,weight,is_atom\n");
        for s in &report.integrand {
            integrand.push_str(&csv_row(&[s.m, s.value, s.weight]));
            integrand.truncate(integrand.len() - 1);
            integrand.push_str(if s.is_atom { ",1\n" } else { ",0\n" });
        }
        Ok(Outcome::ok(vec![
            json_artifact("price.json", &json),
            Artifact {
                name: "profile.csv",
                body: profile_csv(&profile)?,
            },
            Artifact {
                name: "integrand.csv",
                body: integrand,
            },
        ]))
    }

    fn profile(&self) -> Result<Outcome, Failure> {
        let payoff = self.payoff()?;
        let profile = self.build_profile(&payoff)?;
        Ok(Outcome::ok(vec![Artifact {
            name: "profile.csv",
            body: profile_csv(&profile)?,
        }]))
    }

    fn hedge_table(&self) -> Result<Outcome, Failure> {
        let payoff = self.payoff()?;
        let profile = self.build_profile(&payoff)?;
        let hedge = SemiStaticHedge::new(&profile, &payoff)?;
        let xs = match &self.config.hedge.x {
            Some(xs) => xs.clone(),
            None => hedge.default_x_grid(&profile, self.config.hedge.uniform_points),
        };
        let rows = hedge.tabulate(&xs)?;
        let mut table = String::from("x");
        for i in 1..=self.system.len() {
            table.push_str(&format!(",lambda_{i}"));
        }
        table.push('\n');
        for row in &rows {
            table.push_str(&csv_row(row));
        }

        let digital_rules = hedge
            .digital_rules()
            .into_iter()
            .map(|r| RuleJson {
                barrier: r.barrier,
                weight: r.weight,
                strikes: r.strikes,
                forward_units: r.forward_units,
                stock_units: r.stock_units,
                cost: r.cost,
            })
            .collect();
        let cells = hedge
            .quadrature()
            .pieces()
            .iter()
            .filter_map(|p| match p {
                BarrierPiece::Cell { lo, hi, rate, zeta } => Some(CellJson {
                    lo: *lo,
                    hi: *hi,
                    rate: *rate,
                    strikes: zeta.clone(),
                }),
                BarrierPiece::Atom { .. } => None,
            })
            .collect();
        let holdings = HoldingsJson {
            command: "hedge-table",
            config: &self.config,
            initial_capital: hedge.initial_capital(),
            cash: hedge.cash(),
            static_costs: hedge.static_costs().to_vec(),
            digital_rules,
            cells,
        };
        Ok(Outcome::ok(vec![
            Artifact {
                name: "lambda.csv",
                body: table,
            },
            json_artifact("holdings.json", &holdings),
        ]))
    }

    fn simulate(&self) -> Result<Outcome, Failure> {
        let payoff = self.payoff()?;
        let profile = self.build_profile(&payoff)?;
        let hedge = SemiStaticHedge::new(&profile, &payoff)?;
        let sample = iterated_stop(&profile, &self.config.sim_config(self.spot()))?;
        sample.check_truncation()?;
        let estimate = payoff_estimate(&sample, &payoff);
        let gaps = superhedge_equality(&sample, &hedge)?;
        let times = self.input.times();
        let json = SimulateJson {
            command: "simulate",
            config: &self.config,
            bound: hedge.initial_capital(),
            estimate: estimate.estimate,
            stderr: estimate.stderr,
            samples: estimate.samples,
            n_paths: sample.n_paths,
            truncated: sample.truncated,
            marginal_fit: marginal_fit(&sample, &self.system)
                .into_iter()
                .enumerate()
                .map(|(i, ks)| KsRow {
                    maturity: i + 1,
                    time: times[i],
                    ks,
                })
                .collect(),
            gaps: GapJson {
                mean: gaps.mean,
                min: gaps.min,
                max: gaps.max,
                count: gaps.count,
            },
        };
        let mut artifacts = vec![json_artifact("simulate.json", &json)];
        if self.config.sim.path_rows > 0 {
            let n = self.system.len();
            let mut csv = String::from("path");
            for prefix in ["x", "max", "steps"] {
                for i in 1..=n {
                    csv.push_str(&format!(",{prefix}_{i}"));
                }
            }
            csv.push('\n');
            for (k, p) in sample.paths.iter().take(self.config.sim.path_rows).enumerate() {
                csv.push_str(&k.to_string());
                for v in p.values.iter().chain(&p.maxima) {
                    csv.push(',');
                    csv.push_str(&format_float(*v));
                }
                for s in &p.steps {
                    csv.push_str(&format!(",{s}"));
                }
                csv.push('\n');
            }
            artifacts.push(Artifact {
                name: "paths.csv",
                body: csv,
            });
        }
        Ok(Outcome::ok(artifacts))
    }

    fn one_marginal(&self) -> Result<Outcome, Failure> {
        let cfg = &self.config.one_marginal;
        let maturity = cfg.maturity.expect("resolved");
        let curve = self.system.curve(maturity - 1);
        let payoff = self.config.one_marginal_payoff()?;
        let est = value_one_marginal(curve, &payoff, &self.config.sim_config(self.spot()))?;

        let grid = DiagnosticGrid {
            nx: cfg.diagnostic_points,
            nm: cfg.diagnostic_points,
            ..DiagnosticGrid::for_curve(curve)
        };
        let d = assumption_diagnostics(&payoff, curve, &grid);
        let (lo, hi) = (curve.left_support(), curve.right_support());
        let lambda = LambdaStar::new(curve, &payoff);
        let mut table = String::from("x,lambda_star\n");
        let count = if hi > lo { cfg.diagnostic_points } else { 1 };
        for k in 0..count {
            // Points of [lo, hi), the right end excluded.
            let x = lo + (hi - lo) * k as f64 / count as f64;
            table.push_str(&csv_row(&[x, lambda.eval(&payoff, x)?]));
        }
        let message = (!d.warnings.is_empty()).then(|| format!("warning: {}", d.warnings.join("; warning: ")));
        let json = OneMarginalJson {
            command: "one-marginal",
            config: &self.config,
            maturity,
            time: self.system.times()[maturity - 1],
            payoff: payoff.name(),
            estimate: est.estimate,
            stderr: est.stderr,
            samples: est.samples,
            diagnostics: DiagnosticsJson {
                lipschitz_m_observed: d.lipschitz_m_observed,
                lipschitz_x_observed: d.lipschitz_x_observed,
                lipschitz_ok: d.lipschitz_ok,
                monotone_violations: d.monotone_violations,
                monotone_max_drop: d.monotone_max_drop,
                monotone_ok: d.monotone_ok,
                surplus_max: d.surplus_max,
                measure_max_excess: d.measure_max_excess,
                measure_ok: d.measure_ok,
                warnings: d.warnings,
            },
        };
        Ok(Outcome {
            artifacts: vec![
                json_artifact("one_marginal.json", &json),
                Artifact {
                    name: "lambda_star.csv",
                    body: table,
                },
            ],
            code: 0,
            message,
        })
    }
}

fn json_artifact<T: Serialize>(name: &'static str, value: &T) -> Artifact {
    let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
    body.push('\n');
    Artifact { name, body }
}

fn profile_csv(profile: &BoundaryProfile) -> Result<String, Failure> {
    let mut buf = Vec::new();
    profile.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Failure::io(e.to_string()))
}

/// Comma-joined values at 17 significant digits, newline-terminated.
fn csv_row(values: &[f64]) -> String {
    let mut line = values.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}
