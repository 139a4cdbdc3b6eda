use std::fs;
use std::path::Path;

use robust_lookback::{CallQuoteGrid, Error, MarginalCurve, MarginalSystem};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Market data: one call-price curve per maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketInput {
    pub spot: f64,
    pub maturities: Vec<Maturity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maturity {
    /// Years.
    pub time: f64,
    /// `[strike, price]` pairs.
    pub quotes: Vec<(f64, f64)>,
}

impl MarketInput {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let input: Self = serde_json::from_str(text).map_err(|e| Failure::io(format!("malformed input: {e}")))?;
        if !input.spot.is_finite() {
            return Err(Failure::io("spot must be finite"));
        }
        if input.maturities.is_empty() {
            return Err(Failure::io("input needs at least one maturity"));
        }
        if input.maturities.iter().any(|m| !m.time.is_finite()) {
            return Err(Failure::io("maturity times must be finite"));
        }
        if input.maturities.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Failure::io("maturity times must be strictly increasing"));
        }
        Ok(input)
    }

    pub fn times(&self) -> Vec<f64> {
        self.maturities.iter().map(|m| m.time).collect()
    }

    /// Builds the marginal system without checking the convex order.
    pub fn system(&self) -> Result<MarginalSystem, Failure> {
        let curves = self
            .maturities
            .iter()
            .enumerate()
            .map(|(i, m)| {
                MarginalCurve::from_quotes(&CallQuoteGrid::new(self.spot, m.quotes.clone()))
                    .map_err(|e| curve_failure(i + 1, e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        MarginalSystem::new(self.spot, curves, self.times()).map_err(Failure::from)
    }
}

fn curve_failure(maturity: usize, e: Error) -> Failure {
    let message = match &e {
        Error::NonConvexQuotes { strike, .. } => format!("call curve not convex at t_{maturity}, K={strike}"),
        Error::MeanMismatch { implied, spot } => {
            format!("implied mean {implied} at t_{maturity} does not match spot {spot}")
        }
        other => format!("maturity t_{maturity}: {other}"),
    };
    Failure {
        code: crate::exit_code(&e),
        message,
    }
}
