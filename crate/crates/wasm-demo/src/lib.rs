//! Browser bindings. Each market is a chain of uniform laws centred on a
//! spot of 1 whose half-widths must be nondecreasing.

use std::sync::Arc;

use robust_lookback::boundary::{BoundaryProfile, GridSpec};
use robust_lookback::embedding::{iterated_stop, marginal_fit, payoff_estimate, superhedge_equality};
use robust_lookback::{fixtures, MarginalSystem, PayoffSpec, SemiStaticHedge, SimConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SPOT: f64 = 1.0;
const STEP: f64 = 2e-3;

fn parse_widths(widths: &str) -> Result<Vec<f64>, String> {
    let ws: Vec<f64> = widths
        .split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect::<Result<_, _>>()?;
    if ws.is_empty() || ws.len() > 4 {
        return Err("give between one and four half-widths".into());
    }
    if ws.iter().any(|w| !(0.01..=1.0).contains(w)) {
        return Err("half-widths must lie in [0.01, 1]".into());
    }
    Ok(ws)
}

fn system(widths: &str) -> Result<MarginalSystem, String> {
    let curves = parse_widths(widths)?
        .into_iter()
        .map(|w| fixtures::uniform_with_step(SPOT - w, SPOT + w, STEP))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let sys = MarginalSystem::from_curves(SPOT, curves).map_err(|e| e.to_string())?;
    sys.check_convex_order().map_err(|e| e.to_string())?;
    Ok(sys)
}

fn build(widths: &str, payoff: &PayoffSpec) -> Result<BoundaryProfile, String> {
    let spec = GridSpec {
        nodes: 200,
        refine: 2,
        extra: payoff.atoms().iter().map(|a| a.0).collect(),
        ..Default::default()
    };
    BoundaryProfile::build_adaptive(Arc::new(system(widths)?), &spec).map_err(|e| e.to_string())
}

fn payoff(kind: &str, level: f64) -> Result<PayoffSpec, String> {
    match kind {
        "digital" => Ok(PayoffSpec::digital(level)),
        "capped" => PayoffSpec::capped_linear(SPOT, level).map_err(|e| e.to_string()),
        other => Err(format!("unknown payoff {other:?}")),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

#[derive(Serialize)]
struct ProfileOut {
    m: Vec<f64>,
    /// One row per maturity.
    zeta: Vec<Vec<f64>>,
    c: Vec<f64>,
    survival: Vec<f64>,
}

pub fn profile_json(widths: &str) -> Result<String, String> {
    let prof = build(widths, &PayoffSpec::constant(0.0))?;
    let n = prof.system().len();
    let pts = prof.points();
    Ok(json(&ProfileOut {
        m: pts.iter().map(|p| p.m).collect(),
        zeta: (0..n).map(|i| pts.iter().map(|p| p.zeta[i]).collect()).collect(),
        c: pts.iter().map(|p| p.value).collect(),
        survival: pts.iter().map(|p| prof.system().last().survival_closed(p.m)).collect(),
    }))
}

#[derive(Serialize)]
struct HedgeOut {
    bound: f64,
    static_costs: Vec<f64>,
    x: Vec<f64>,
    /// `λ_i` on `x`, one row per maturity.
    lambda: Vec<Vec<f64>>,
}

pub fn hedge_json(widths: &str, kind: &str, level: f64) -> Result<String, String> {
    let phi = payoff(kind, level)?;
    let prof = build(widths, &phi)?;
    let hedge = SemiStaticHedge::new(&prof, &phi).map_err(|e| e.to_string())?;
    let sys = prof.system();
    let (lo, hi) = (sys.min_left_support(), sys.max_right_support());
    let x: Vec<f64> = (0..=200).map(|k| lo + (hi - lo) * k as f64 / 200.0).collect();
    let rows = hedge.tabulate(&x).map_err(|e| e.to_string())?;
    Ok(json(&HedgeOut {
        bound: hedge.initial_capital(),
        static_costs: hedge.static_costs().to_vec(),
        lambda: (1..=sys.len()).map(|i| rows.iter().map(|r| r[i]).collect()).collect(),
        x,
    }))
}

#[derive(Serialize)]
struct SimulateOut {
    bound: f64,
    estimate: f64,
    stderr: f64,
    ks: Vec<f64>,
    gap_mean: f64,
    gap_min: f64,
    /// Histogram of the final maximum on `[1, 2]`.
    max_edges: Vec<f64>,
    max_counts: Vec<usize>,
}

pub fn simulate_json(widths: &str, kind: &str, level: f64, n_paths: usize, seed: u64) -> Result<String, String> {
    let phi = payoff(kind, level)?;
    let prof = build(widths, &phi)?;
    let hedge = SemiStaticHedge::new(&prof, &phi).map_err(|e| e.to_string())?;
    let config = SimConfig {
        seed,
        n_paths: n_paths.clamp(1, 50_000),
        step: 1e-3,
        ..SimConfig::for_spot(SPOT)
    };
    let sample = iterated_stop(&prof, &config).map_err(|e| e.to_string())?;
    sample.check_truncation().map_err(|e| e.to_string())?;
    let est = payoff_estimate(&sample, &phi);
    let gaps = superhedge_equality(&sample, &hedge).map_err(|e| e.to_string())?;
    let bins = 40;
    let mut counts = vec![0usize; bins];
    for p in &sample.paths {
        let t = (p.maxima.last().copied().unwrap_or(SPOT) - 1.0) * bins as f64;
        counts[(t.max(0.0) as usize).min(bins - 1)] += 1;
    }
    Ok(json(&SimulateOut {
        bound: hedge.initial_capital(),
        estimate: est.estimate,
        stderr: est.stderr,
        ks: marginal_fit(&sample, prof.system()),
        gap_mean: gaps.mean,
        gap_min: gaps.min,
        max_edges: (0..=bins).map(|k| 1.0 + k as f64 / bins as f64).collect(),
        max_counts: counts,
    }))
}

/// `C(m)`, `ζ*_i(m)` and the law of the final value at the barrier grid.
#[wasm_bindgen]
pub fn profile(widths: &str) -> Result<String, JsError> {
    profile_json(widths).map_err(|e| JsError::new(&e))
}

/// Robust bound and static positions for a digital or capped payoff.
#[wasm_bindgen]
pub fn hedge(widths: &str, kind: &str, level: f64) -> Result<String, JsError> {
    hedge_json(widths, kind, level).map_err(|e| JsError::new(&e))
}

/// Monte Carlo of the iterated embedding against the bound.
#[wasm_bindgen]
pub fn simulate(widths: &str, kind: &str, level: f64, n_paths: usize, seed: u64) -> Result<String, JsError> {
    simulate_json(widths, kind, level, n_paths, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(system("0.5, 0.2").is_err());
        assert!(system("").is_err());
        assert!(system("abc").is_err());
        assert!(system("1.5").is_err());
        assert!(system("0.5, 1").is_ok());
    }

    #[test]
    fn single_uniform_profile() {
        let v = parse(&profile_json("0.8").unwrap());
        let (m, c) = (v["m"].as_array().unwrap(), v["c"].as_array().unwrap());
        assert_eq!(m.len(), c.len());
        assert_eq!(v["zeta"].as_array().unwrap().len(), 1);
        // C(m) = (1.8 - m)/0.8 on the uniform law, tangent at ζ = 2m - 1.8.
        for (m, c) in m.iter().zip(c).map(|(m, c)| (m.as_f64().unwrap(), c.as_f64().unwrap())) {
            if m > 1.05 && m < 1.75 {
                assert!((c - (1.8 - m) / 0.8).abs() < 1e-3, "m={m}: {c}");
            }
        }
    }

    #[test]
    fn capped_bound_matches_the_closed_form() {
        // U[1-w, 1+w] gives U = 1 + w/2 for min(m, 1+w).
        let v = parse(&hedge_json("0.5", "capped", 1.5).unwrap());
        assert!((v["bound"].as_f64().unwrap() - 1.25).abs() < 1e-3);
        assert_eq!(v["lambda"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn simulation_sits_below_the_bound() {
        let v = parse(&simulate_json("0.3, 0.6", "digital", 1.3, 2000, 1).unwrap());
        let counts: usize = v["max_counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap() as usize)
            .sum();
        assert_eq!(counts, 2000);
        let (b, e, s) = (
            v["bound"].as_f64().unwrap(),
            v["estimate"].as_f64().unwrap(),
            v["stderr"].as_f64().unwrap(),
        );
        assert!(e <= b + 4.0 * s, "{e} vs {b}");
        assert!(v["gap_min"].as_f64().unwrap() >= -1e-9);
    }
}
