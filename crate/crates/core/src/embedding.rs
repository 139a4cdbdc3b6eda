//! Monte Carlo of the Azéma-Yor embedding and its iterated version.
//!
//! Brownian motion is approximated by a Gaussian random walk. Path `k` draws
//! from its own ChaCha8 stream `(seed, k)`, so samples do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::boundary::BoundaryProfile;
use crate::error::{Error, Result};
use crate::hedge::{PathSkeleton, SemiStaticHedge};
use crate::marginals::{MarginalCurve, MarginalSystem};
use crate::pricer::PayoffSpec;

/// Largest fraction of truncated paths tolerated by the estimators.
pub const MAX_TRUNCATED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    GaussianIncrements,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: usize,
    /// Variance of one increment.
    pub step: f64,
    pub max_steps: u64,
    pub scheme: Scheme,
    /// Stopping slack in units of the increment standard deviation.
    pub slack: f64,
}

impl SimConfig {
    /// Defaults scaled to `spot`: step `1e-4 spot²`, at most `10^7` steps.
    pub fn for_spot(spot: f64) -> Self {
        Self {
            seed: 0,
            n_paths: 100_000,
            step: 1e-4 * spot * spot,
            max_steps: 10_000_000,
            scheme: Scheme::GaussianIncrements,
            slack: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(Error::InvalidConfig("slack must be nonnegative".into()));
        }
        Ok(())
    }

    fn tolerance(&self) -> f64 {
        self.slack * self.step.sqrt()
    }
}

/// Random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stopping levels `η_i(M)`; a path stops in phase `i` once `X <= η_i(M)`.
pub trait StoppingRule: Sync {
    fn phases(&self) -> usize;
    fn spot(&self) -> f64;
    fn level(&self, phase: usize, max: f64) -> f64;
}

/// Azéma-Yor rule `X <= b^{-1}(M)` of a single curve.
#[derive(Debug, Clone, Copy)]
pub struct AzemaYor<'a>(pub &'a MarginalCurve);

impl StoppingRule for AzemaYor<'_> {
    fn phases(&self) -> usize {
        1
    }

    fn spot(&self) -> f64 {
        self.0.spot()
    }

    fn level(&self, _phase: usize, max: f64) -> f64 {
        self.0.barycenter_inverse(max)
    }
}

/// Iterated rule `η_i = ζ*_i`, interpolated on the profile grid.
///
/// Once `M` reaches the right end of the support of `μ_i` the level is `M`
/// itself: a uniformly integrable embedding of `μ_i` cannot carry its
/// maximum past that point before `τ_i`.
#[derive(Debug, Clone, Copy)]
pub struct IteratedRule<'a>(pub &'a BoundaryProfile);

impl StoppingRule for IteratedRule<'_> {
    fn phases(&self) -> usize {
        self.0.system().len()
    }

    fn spot(&self) -> f64 {
        self.0.system().spot()
    }

    fn level(&self, phase: usize, max: f64) -> f64 {
        if max >= self.0.system().curve(phase).right_support() || max >= self.0.max_m() {
            return max;
        }
        self.0.zeta_at(phase, max).unwrap_or(max)
    }
}

/// Stopped values, maxima and step counts of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedPath {
    pub values: Vec<f64>,
    pub maxima: Vec<f64>,
    pub steps: Vec<u64>,
}

/// Runs one path through every phase of `rule`.
pub fn stop_path<R: Rng + ?Sized, S: StoppingRule + ?Sized>(
    rng: &mut R,
    rule: &S,
    config: &SimConfig,
) -> Result<StoppedPath> {
    let n = rule.phases();
    let sd = config.step.sqrt();
    let tol = config.tolerance();
    let mut x = rule.spot();
    let mut max = x;
    let mut steps = 0u64;
    let mut out = StoppedPath {
        values: Vec::with_capacity(n),
        maxima: Vec::with_capacity(n),
        steps: Vec::with_capacity(n),
    };
    for phase in 0..n {
        let mut level = rule.level(phase, max);
        while x > level + tol {
            if steps >= config.max_steps {
                return Err(Error::Truncated { steps });
            }
            let z: f64 = rng.sample(StandardNormal);
            x += sd * z;
            steps += 1;
            if x > max {
                max = x;
                level = rule.level(phase, max);
            }
        }
        out.values.push(x);
        out.maxima.push(max);
        out.steps.push(steps);
    }
    Ok(out)
}

/// Single-curve Azéma-Yor stop of one path.
pub fn ay_stop<R: Rng + ?Sized>(rng: &mut R, curve: &MarginalCurve, config: &SimConfig) -> Result<(f64, f64)> {
    let p = stop_path(rng, &AzemaYor(curve), config)?;
    Ok((p.values[0], p.maxima[0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppedSample {
    pub spot: f64,
    /// Non-truncated paths in index order.
    pub paths: Vec<StoppedPath>,
    pub truncated: usize,
    pub n_paths: usize,
}

impl StoppedSample {
    pub fn phases(&self) -> usize {
        self.paths.first().map_or(0, |p| p.values.len())
    }

    /// Stopped values at phase `i`.
    pub fn values(&self, i: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.values[i]).collect()
    }

    pub fn skeletons(&self) -> Result<Vec<PathSkeleton>> {
        self.paths
            .iter()
            .map(|p| PathSkeleton::new(self.spot, p.values.clone(), p.maxima.clone()))
            .collect()
    }

    /// Errors with `TooManyTruncated` above the tolerated fraction.
    pub fn check_truncation(&self) -> Result<()> {
        if self.truncated as f64 > MAX_TRUNCATED_FRACTION * self.n_paths as f64 || self.paths.is_empty() {
            return Err(Error::TooManyTruncated {
                truncated: self.truncated,
                total: self.n_paths,
            });
        }
        Ok(())
    }
}

/// Simulates `config.n_paths` paths under `rule`. Truncated paths are
/// counted and dropped.
pub fn simulate<S: StoppingRule + ?Sized>(rule: &S, config: &SimConfig) -> Result<StoppedSample> {
    config.validate()?;
    let results: Vec<Result<StoppedPath>> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|k| stop_path(&mut path_rng(config.seed, k), rule, config))
        .collect();
    let mut paths = Vec::with_capacity(results.len());
    let mut truncated = 0;
    for r in results {
        match r {
            Ok(p) => paths.push(p),
            Err(Error::Truncated { .. }) => truncated += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(StoppedSample {
        spot: rule.spot(),
        paths,
        truncated,
        n_paths: config.n_paths,
    })
}

pub fn ay_sample(curve: &MarginalCurve, config: &SimConfig) -> Result<StoppedSample> {
    simulate(&AzemaYor(curve), config)
}

pub fn iterated_stop(profile: &BoundaryProfile, config: &SimConfig) -> Result<StoppedSample> {
    simulate(&IteratedRule(profile), config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Sample mean and standard error, exact when all values coincide.
pub fn mean_stderr(values: &[f64]) -> McEstimate {
    let n = values.len();
    if n == 0 {
        return McEstimate {
            estimate: f64::NAN,
            stderr: f64::NAN,
            samples: 0,
        };
    }
    let shift = values[0];
    let mean_dev = values.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    let estimate = shift + mean_dev;
    let stderr = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - shift - mean_dev).powi(2)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        estimate,
        stderr,
        samples: n,
    }
}

/// `φ(M_{τ_n})` averaged over a sample.
pub fn payoff_estimate(sample: &StoppedSample, payoff: &PayoffSpec) -> McEstimate {
    let values: Vec<f64> = sample
        .paths
        .iter()
        .map(|p| payoff.phi(*p.maxima.last().expect("at least one phase")))
        .collect();
    mean_stderr(&values)
}

pub fn mc_lookback(profile: &BoundaryProfile, payoff: &PayoffSpec, config: &SimConfig) -> Result<McEstimate> {
    let sample = iterated_stop(profile, config)?;
    sample.check_truncation()?;
    Ok(payoff_estimate(&sample, payoff))
}

/// Kolmogorov distance between the sample and a discrete law.
pub fn ks_distance(sample: &[f64], curve: &MarginalCurve) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut j = 0;
    while j < xs.len() {
        let v = xs[j];
        let mut k = j;
        while k < xs.len() && xs[k] == v {
            k += 1;
        }
        let below = 1.0 - curve.survival_closed(v);
        d = d
            .max((j as f64 / n - below).abs())
            .max((k as f64 / n - curve.cdf(v)).abs());
        j = k;
    }
    for &knot in curve.knots() {
        let lt = xs.partition_point(|&x| x < knot) as f64 / n;
        let le = xs.partition_point(|&x| x <= knot) as f64 / n;
        d = d
            .max((lt - (1.0 - curve.survival_closed(knot))).abs())
            .max((le - curve.cdf(knot)).abs());
    }
    d
}

/// KS distance of the stopped values at each maturity against the curve.
pub fn marginal_fit(sample: &StoppedSample, system: &MarginalSystem) -> Vec<f64> {
    (0..system.len().min(sample.phases()))
        .map(|i| ks_distance(&sample.values(i), system.curve(i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GapStats {
    pub fn from_gaps(gaps: &[f64]) -> Self {
        Self {
            mean: mean_stderr(gaps).estimate,
            min: gaps.iter().copied().fold(f64::INFINITY, f64::min),
            max: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: gaps.len(),
        }
    }
}

/// Distribution of hedge value minus payoff along the stopped paths.
pub fn superhedge_equality(sample: &StoppedSample, hedge: &SemiStaticHedge) -> Result<GapStats> {
    let gaps = hedge.evaluate_gaps(&sample.skeletons()?)?;
    Ok(GapStats::from_gaps(&gaps))
}
