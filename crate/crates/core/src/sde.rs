//! Discretized paths of `dX = b(X) dt + √a(X) dW` and empirical checks of
//! the invariant law.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bound::ks_statistic;
use crate::density::TargetDensity;
use crate::diffusion::DiffusionModel;
use crate::io::{write_csv, KeyValueReport};
use crate::mc::substream;
use crate::{Error, Result};

pub const BURN_IN_FRACTION: f64 = 0.1;
pub const ACF_WINDOW_STEPS: usize = 1000;
pub const MIN_CHECK_HORIZON: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Milstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryPolicy {
    Reflect,
    Clip,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "milstein" => Ok(Scheme::Milstein),
            _ => Err(Error::Config(format!(
                "unknown scheme '{s}' (euler | milstein)"
            ))),
        }
    }
}

impl FromStr for BoundaryPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflect" => Ok(BoundaryPolicy::Reflect),
            "clip" => Ok(BoundaryPolicy::Clip),
            _ => Err(Error::Config(format!(
                "unknown boundary policy '{s}' (reflect | clip)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Milstein => "milstein",
        })
    }
}

impl fmt::Display for BoundaryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryPolicy::Reflect => "reflect",
            BoundaryPolicy::Clip => "clip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Starting point; the median of the target when `None`.
    pub x0: Option<f64>,
    pub scheme: Scheme,
    pub boundary: BoundaryPolicy,
    pub seed: u64,
    /// Occupation samples are taken every this many steps.
    pub occupation_stride: usize,
    /// Full-path rows are kept every this many steps when set.
    pub path_stride: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 1e4,
            x0: None,
            scheme: Scheme::Euler,
            boundary: BoundaryPolicy::Reflect,
            seed: 0,
            occupation_stride: 10,
            path_stride: None,
        }
    }
}

impl SimConfig {
    fn validate(&self, model: &DiffusionModel) -> Result<(f64, usize)> {
        if !(self.dt > 0.0
            && self.dt.is_finite()
            && self.horizon.is_finite()
            && self.dt < self.horizon)
        {
            return Err(Error::Config(format!(
                "need 0 < dt < horizon, got dt = {}, horizon = {}",
                self.dt, self.horizon
            )));
        }
        if self.occupation_stride == 0 || self.path_stride == Some(0) {
            return Err(Error::Config("strides must be positive".into()));
        }
        let x0 = self.x0.unwrap_or_else(|| model.density().median());
        if !model.density().support().contains(x0) {
            return Err(Error::Config(format!(
                "x0 = {x0} is not strictly inside the support"
            )));
        }
        if !(model.a(x0) > 0.0) {
            return Err(Error::Config(format!(
                "a(x0) = {} must be positive",
                model.a(x0)
            )));
        }
        Ok((x0, (self.horizon / self.dt).round() as usize))
    }
}

/// Summary of one simulated path.
#[derive(Debug, Clone)]
pub struct PathSummary {
    pub steps: usize,
    pub final_state: f64,
    /// Post-burn-in states taken every `occupation_stride` steps.
    pub occupation: Vec<f64>,
    /// Fraction of steps whose state lies in the closed support.
    pub time_in_support_fraction: f64,
    /// `(t, X_t)` rows when `path_stride` is set.
    pub path: Option<Vec<(f64, f64)>>,
}

impl PathSummary {
    pub fn write_path_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self
            .path
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|(t, x)| vec![*t, *x]);
        write_csv(out, &["t", "x"], rows)
    }
}

fn sigma(model: &DiffusionModel, x: f64) -> f64 {
    model.a_fast(x).max(0.0).sqrt()
}

/// Central difference of `√a⁺`, one-sided next to a finite boundary.
fn sigma_prime(model: &DiffusionModel, x: f64) -> f64 {
    let s = model.density().support();
    let h = 1e-6 * (1.0 + x.abs());
    let up = x + h < s.upper();
    let down = x - h > s.lower();
    match (down, up) {
        (true, true) => (sigma(model, x + h) - sigma(model, x - h)) / (2.0 * h),
        (false, true) => (sigma(model, x + h) - sigma(model, x)) / h,
        (true, false) => (sigma(model, x) - sigma(model, x - h)) / h,
        (false, false) => 0.0,
    }
}

fn apply_boundary(x: f64, lo: f64, hi: f64, policy: BoundaryPolicy) -> f64 {
    match policy {
        BoundaryPolicy::Clip => x.clamp(lo, hi),
        BoundaryPolicy::Reflect => {
            let mut y = x;
            for _ in 0..4 {
                if y < lo {
                    y = 2.0 * lo - y;
                } else if y > hi {
                    y = 2.0 * hi - y;
                } else {
                    return y;
                }
            }
            y.clamp(lo, hi)
        }
    }
}

/// Euler–Maruyama or Milstein path with `a` floored at 0 and the boundary
/// policy applied after every step.
pub fn simulate_path(model: &DiffusionModel, config: &SimConfig) -> Result<PathSummary> {
    let (x0, steps) = config.validate(model)?;
    let s = model.density().support();
    let (lo, hi) = (s.lower(), s.upper());
    let mut rng = substream(config.seed, 0);
    let sqdt = config.dt.sqrt();
    let burn = (BURN_IN_FRACTION * steps as f64).ceil() as usize;
    let mut occupation =
        Vec::with_capacity((steps - burn.min(steps)) / config.occupation_stride + 1);
    let mut path = config
        .path_stride
        .map(|k| Vec::with_capacity(steps / k + 2));
    if let Some(p) = path.as_mut() {
        p.push((0.0, x0));
    }
    let mut x = x0;
    let mut inside = 0usize;
    for k in 1..=steps {
        let xi: f64 = rng.sample(StandardNormal);
        let dw = sqdt * xi;
        let sig = sigma(model, x);
        let mut next = x + model.b(x) * config.dt + sig * dw;
        if config.scheme == Scheme::Milstein {
            next += 0.5 * sig * sigma_prime(model, x) * (dw * dw - config.dt);
        }
        if !next.is_finite() {
            return Err(Error::Blowup {
                step: k,
                state: next,
            });
        }
        x = apply_boundary(next, lo, hi, config.boundary);
        if x >= lo && x <= hi {
            inside += 1;
        }
        if k > burn && (k - burn) % config.occupation_stride == 0 {
            occupation.push(x);
        }
        if let (Some(p), Some(stride)) = (path.as_mut(), config.path_stride) {
            if k % stride == 0 {
                p.push((k as f64 * config.dt, x));
            }
        }
    }
    Ok(PathSummary {
        steps,
        final_state: x,
        occupation,
        time_in_support_fraction: inside as f64 / steps as f64,
        path,
    })
}

/// Integrated autocorrelation time of a series, in units of its spacing,
/// summed over lags `1..=window`.
pub fn integrated_autocorrelation(series: &[f64], window: usize) -> f64 {
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = dev.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..=window.min(n - 1) {
        let c: f64 = dev[..n - lag]
            .iter()
            .zip(&dev[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64;
        tau += 2.0 * c / c0;
    }
    tau.max(1.0)
}

/// Occupation measure of a post-burn-in path against a target law.
#[derive(Debug, Clone)]
pub struct OccupationSummary {
    pub empirical_cdf: Vec<(f64, f64)>,
    pub ks_vs_target: f64,
    pub time_in_support_fraction: f64,
    pub samples: usize,
    pub mean: f64,
    /// Autocorrelation time in occupation-sample units.
    pub autocorrelation_time: f64,
    pub effective_sample_size: f64,
    pub effective_stderr: f64,
    /// 95% K-S critical value for iid sampling of the effective size.
    pub ks_baseline: f64,
}

impl OccupationSummary {
    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push_num("ks_vs_target", self.ks_vs_target);
        r.push_num("ks_baseline", self.ks_baseline);
        r.push_num("time_in_support_fraction", self.time_in_support_fraction);
        r.push("samples", self.samples.to_string());
        r.push_num("mean", self.mean);
        r.push_num("effective_stderr", self.effective_stderr);
        r.push_num("autocorrelation_time", self.autocorrelation_time);
        r.push_num("effective_sample_size", self.effective_sample_size);
        r
    }
}

/// Simulates the model and compares its occupation measure with the
/// model's own density.
pub fn invariant_check(model: &DiffusionModel, config: &SimConfig) -> Result<OccupationSummary> {
    invariant_check_against(model, config, model.density())
}

/// As [`invariant_check`], against an arbitrary target law.
pub fn invariant_check_against(
    model: &DiffusionModel,
    config: &SimConfig,
    target: &TargetDensity,
) -> Result<OccupationSummary> {
    if config.horizon < MIN_CHECK_HORIZON {
        return Err(Error::Config(format!(
            "invariant check needs horizon >= {MIN_CHECK_HORIZON}, got {}",
            config.horizon
        )));
    }
    let path = simulate_path(model, config)?;
    Ok(summarize(&path, config, target))
}

fn summarize(path: &PathSummary, config: &SimConfig, target: &TargetDensity) -> OccupationSummary {
    let occ = &path.occupation;
    let n = occ.len();
    let window = (ACF_WINDOW_STEPS / config.occupation_stride).max(1);
    let tau = integrated_autocorrelation(occ, window);
    let ess = n as f64 / tau;
    let mean = occ.iter().sum::<f64>() / n as f64;
    let var = occ.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let mut sorted = occ.clone();
    sorted.sort_by(f64::total_cmp);
    let empirical_cdf = (1..=100)
        .map(|i| {
            let x = target.quantile(i as f64 / 101.0);
            (x, sorted.partition_point(|v| *v <= x) as f64 / n as f64)
        })
        .collect();
    OccupationSummary {
        empirical_cdf,
        ks_vs_target: ks_statistic(&sorted, target),
        time_in_support_fraction: path.time_in_support_fraction,
        samples: n,
        mean,
        autocorrelation_time: tau,
        effective_sample_size: ess,
        effective_stderr: (var / ess).sqrt(),
        ks_baseline: 1.36 / ess.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_folds_back_inside() {
        assert_eq!(apply_boundary(-0.2, 0.0, 1.0, BoundaryPolicy::Reflect), 0.2);
        assert_eq!(apply_boundary(1.3, 0.0, 1.0, BoundaryPolicy::Reflect), 0.7);
        assert_eq!(apply_boundary(-2.5, 0.0, 1.0, BoundaryPolicy::Reflect), 0.5);
        assert_eq!(apply_boundary(1.3, 0.0, 1.0, BoundaryPolicy::Clip), 1.0);
        assert_eq!(
            apply_boundary(
                5.0,
                f64::NEG_INFINITY,
                f64::INFINITY,
                BoundaryPolicy::Reflect
            ),
            5.0
        );
    }

    #[test]
    fn autocorrelation_of_iid_and_ar1() {
        let mut rng = substream(1, 0);
        let iid: Vec<f64> = (0..50_000).map(|_| rng.sample(StandardNormal)).collect();
        let t = integrated_autocorrelation(&iid, 50);
        assert!((t - 1.0).abs() < 0.2, "{t}");
        // AR(1) with φ = 0.5 has τ = (1 + φ)/(1 - φ) = 3
        let mut x = 0.0;
        let ar: Vec<f64> = iid
            .iter()
            .map(|e| {
                x = 0.5 * x + e;
                x
            })
            .collect();
        let t = integrated_autocorrelation(&ar, 50);
        assert!((t - 3.0).abs() < 0.3, "{t}");
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("milstein".parse::<Scheme>().unwrap(), Scheme::Milstein);
        assert!("rk4".parse::<Scheme>().is_err());
        assert_eq!(
            "clip".parse::<BoundaryPolicy>().unwrap(),
            BoundaryPolicy::Clip
        );
    }
}
