//! Nonparametric estimates of `E[V | Y = y]`.

use crate::mc::Estimate;
use crate::{Error, Result};

pub const MIN_PAIRS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    pub bins: usize,
    /// Bins with fewer samples are merged into a neighbour.
    pub min_count: usize,
    /// Gaussian-kernel regression instead of bins when set.
    pub bandwidth: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            bins: 64,
            min_count: 50,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBin {
    /// Smallest and largest `y` in the bin.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_y: f64,
    pub mean_v: f64,
    /// Within-bin standard error of `mean_v`.
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionalProjection {
    bins: Vec<ProjectionBin>,
    total: usize,
    warnings: Vec<String>,
    kernel: Option<Kernel>,
}

#[derive(Debug, Clone)]
struct Kernel {
    bandwidth: f64,
    y: Vec<f64>,
    v: Vec<f64>,
}

/// Regression of `v` on `y`. Pairs are sorted by `y`, so ties never straddle
/// two bins.
pub fn conditional_projection(
    y: &[f64],
    v: &[f64],
    config: ProjectionConfig,
) -> Result<ConditionalProjection> {
    if y.len() != v.len() {
        return Err(Error::Config(format!(
            "{} responses for {} regressors",
            v.len(),
            y.len()
        )));
    }
    if y.len() < MIN_PAIRS {
        return Err(Error::Config(format!(
            "conditional projection needs at least {MIN_PAIRS} pairs, got {}",
            y.len()
        )));
    }
    if config.bins == 0 {
        return Err(Error::Config("at least one bin is required".into()));
    }
    if y.iter().chain(v).any(|t| !t.is_finite()) {
        return Err(Error::Domain(
            "non-finite pair in conditional projection".into(),
        ));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&i, &j| y[i].total_cmp(&y[j]).then(i.cmp(&j)));
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let vs: Vec<f64> = order.iter().map(|&i| v[i]).collect();
    let n = ys.len();

    let mut cuts = vec![0];
    for b in 1..config.bins {
        let mut c = (b * n) / config.bins;
        while c < n && c > 0 && ys[c] == ys[c - 1] {
            c += 1;
        }
        if c > *cuts.last().unwrap() && c < n {
            cuts.push(c);
        }
    }
    cuts.push(n);
    let mut ranges: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();

    let mut warnings = Vec::new();
    if ranges.len() < config.bins {
        warnings.push(format!(
            "tied regressor values reduced {} bins to {}",
            config.bins,
            ranges.len()
        ));
    }
    while ranges.len() > 1 {
        let Some(k) = ranges.iter().position(|(a, b)| b - a < config.min_count) else {
            break;
        };
        let merge_left = k == ranges.len() - 1
            || (k > 0 && ranges[k - 1].1 - ranges[k - 1].0 <= ranges[k + 1].1 - ranges[k + 1].0);
        let (i, j) = if merge_left { (k - 1, k) } else { (k, k + 1) };
        warnings.push(format!(
            "bin with {} samples below resolution floor {}; merged",
            ranges[k].1 - ranges[k].0,
            config.min_count
        ));
        ranges[i] = (ranges[i].0, ranges[j].1);
        ranges.remove(j);
    }

    let bins = ranges
        .iter()
        .map(|&(a, b)| {
            let e = Estimate::from_samples(&vs[a..b]);
            ProjectionBin {
                lo: ys[a],
                hi: ys[b - 1],
                count: b - a,
                mean_y: ys[a..b].iter().sum::<f64>() / (b - a) as f64,
                mean_v: e.value,
                stderr: e.stderr,
            }
        })
        .collect();

    let kernel = match config.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => Some(Kernel {
            bandwidth: h,
            y: ys,
            v: vs,
        }),
        Some(h) => {
            return Err(Error::Config(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => None,
    };
    Ok(ConditionalProjection {
        bins,
        total: n,
        warnings,
        kernel,
    })
}

impl ConditionalProjection {
    pub fn bins(&self) -> &[ProjectionBin] {
        &self.bins
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Index of the bin whose range covers `y` (nearest bin between ranges).
    pub fn bin_index(&self, y: f64) -> usize {
        let k = self.bins.partition_point(|b| b.hi < y);
        if k == self.bins.len() {
            return k - 1;
        }
        if k > 0 && y < self.bins[k].lo && y - self.bins[k - 1].hi < self.bins[k].lo - y {
            return k - 1;
        }
        k
    }

    /// Estimate of `E[V | Y = y]`.
    pub fn eval(&self, y: f64) -> f64 {
        match &self.kernel {
            Some(k) => k.eval(y).0,
            None => self.bins[self.bin_index(y)].mean_v,
        }
    }

    /// Estimate of `E|E[V | Y]|` under the empirical law of `Y`.
    ///
    /// The stderr sums the per-bin errors, which bounds the noise of the
    /// absolute values even when all bins err in the same direction.
    pub fn mean_abs(&self) -> Estimate {
        match &self.kernel {
            Some(k) => {
                let stride = (k.y.len() / 4096).max(1);
                let pts: Vec<(f64, f64)> = k.y.iter().step_by(stride).map(|&y| k.eval(y)).collect();
                let m = pts.len() as f64;
                Estimate::new(
                    pts.iter().map(|p| p.0.abs()).sum::<f64>() / m,
                    pts.iter().map(|p| p.1).sum::<f64>() / m,
                )
            }
            None => {
                let n = self.total as f64;
                let value = self
                    .bins
                    .iter()
                    .map(|b| b.count as f64 / n * b.mean_v.abs())
                    .sum();
                let stderr = self
                    .bins
                    .iter()
                    .map(|b| b.count as f64 / n * b.stderr)
                    .sum();
                Estimate::new(value, stderr)
            }
        }
    }
}

impl Kernel {
    /// Nadaraya–Watson value and its stderr from the effective sample size.
    fn eval(&self, y: f64) -> (f64, f64) {
        let h = self.bandwidth;
        let lo = self.y.partition_point(|t| *t < y - 6.0 * h);
        let hi = self.y.partition_point(|t| *t <= y + 6.0 * h);
        if lo == hi {
            let k = lo.min(self.y.len() - 1);
            return (self.v[k], f64::NAN);
        }
        let (mut sw, mut sw2, mut swv, mut swv2) = (0.0, 0.0, 0.0, 0.0);
        for i in lo..hi {
            let u = (self.y[i] - y) / h;
            let w = (-0.5 * u * u).exp();
            sw += w;
            sw2 += w * w;
            swv += w * self.v[i];
            swv2 += w * self.v[i] * self.v[i];
        }
        let m = swv / sw;
        let var = (swv2 / sw - m * m).max(0.0);
        let n_eff = sw * sw / sw2;
        (m, (var / n_eff).sqrt())
    }
}
