//! Target densities: built-in families and tabulated user densities.
//!
//! Every density lives on an open interval `(l, u)` where it is strictly
//! positive. Built-in families use closed-form cdfs and partial moments;
//! tabulated densities are shape-preserving cubic interpolants integrated
//! exactly segment by segment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::roots::bisect;
use crate::numerics::special::{
    beta_reg, gamma_p, gamma_q, ln_beta, ln_gamma, norm_cdf, norm_pdf, norm_quantile, norm_sf,
    LN_SQRT_2PI,
};
use crate::numerics::{GaussLegendre, Pchip};

/// Probability mass left outside the quadrature range at each infinite end.
pub const TAIL_QUANTILE: f64 = 1e-12;

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportInterval {
    lower: f64,
    upper: f64,
}

impl SupportInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() {
            return Err(Error::Domain("support endpoint is NaN".into()));
        }
        if lower >= upper {
            return Err(Error::Domain(format!("empty support ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Family selector used by the CLI, config files and the closed-form
/// coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyTag {
    Normal,
    Gamma,
    Uniform,
    Beta,
    LogNormal,
    Pareto,
    Laplace,
    Tabulated,
}

impl FamilyTag {
    pub const BUILT_IN: [FamilyTag; 7] = [
        FamilyTag::Normal,
        FamilyTag::Gamma,
        FamilyTag::Uniform,
        FamilyTag::Beta,
        FamilyTag::LogNormal,
        FamilyTag::Pareto,
        FamilyTag::Laplace,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FamilyTag::Normal => "normal",
            FamilyTag::Gamma => "gamma",
            FamilyTag::Uniform => "uniform",
            FamilyTag::Beta => "beta",
            FamilyTag::LogNormal => "lognormal",
            FamilyTag::Pareto => "pareto",
            FamilyTag::Laplace => "laplace",
            FamilyTag::Tabulated => "tabulated",
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => FamilyTag::Normal,
            "gamma" | "chi_square" | "chi-square" | "chisquare" => FamilyTag::Gamma,
            "uniform" => FamilyTag::Uniform,
            "beta" => FamilyTag::Beta,
            "lognormal" | "log-normal" => FamilyTag::LogNormal,
            "pareto" => FamilyTag::Pareto,
            "laplace" => FamilyTag::Laplace,
            "tabulated" => FamilyTag::Tabulated,
            other => return Err(Error::Config(format!("unknown family '{other}'"))),
        })
    }
}

/// Family together with its parameters.
#[derive(Debug, Clone)]
pub enum Family {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Shape/rate parameterisation; chi-square(k) is `Gamma(k/2, 1/2)`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// `log X ~ N(delta, sigma^2)`.
    LogNormal {
        delta: f64,
        sigma: f64,
    },
    /// `p(x) = alpha (1 + x)^(-alpha - 1)` on `(0, inf)`.
    Pareto {
        alpha: f64,
    },
    /// `p(x) = alpha / 2 * exp(-alpha |x|)`.
    Laplace {
        alpha: f64,
    },
    Tabulated(Arc<Tabulated>),
}

impl Family {
    pub fn tag(&self) -> FamilyTag {
        match self {
            Family::Normal { .. } => FamilyTag::Normal,
            Family::Gamma { .. } => FamilyTag::Gamma,
            Family::Uniform { .. } => FamilyTag::Uniform,
            Family::Beta { .. } => FamilyTag::Beta,
            Family::LogNormal { .. } => FamilyTag::LogNormal,
            Family::Pareto { .. } => FamilyTag::Pareto,
            Family::Laplace { .. } => FamilyTag::Laplace,
            Family::Tabulated(_) => FamilyTag::Tabulated,
        }
    }

    /// Parameters in declaration order (empty for tabulated densities).
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Family::Normal { mean, sd } => vec![mean, sd],
            Family::Gamma { shape, rate } => vec![shape, rate],
            Family::Uniform { lower, upper } => vec![lower, upper],
            Family::Beta { alpha, beta } => vec![alpha, beta],
            Family::LogNormal { delta, sigma } => vec![delta, sigma],
            Family::Pareto { alpha } => vec![alpha],
            Family::Laplace { alpha } => vec![alpha],
            Family::Tabulated(_) => vec![],
        }
    }
}

/// A probability density on its support interval. Immutable and cheap to
/// clone.
#[derive(Debug, Clone)]
pub struct TargetDensity {
    family: Family,
    support: SupportInterval,
    mean: f64,
    variance: f64,
    quad_range: (f64, f64),
    median: f64,
}

fn invalid(family: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidParameters {
        family,
        constraint: constraint.into(),
    }
}

fn check_finite(family: &'static str, params: &[f64]) -> Result<()> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(invalid(family, "parameters must be finite"));
    }
    Ok(())
}

impl TargetDensity {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        check_finite("normal", &[mean, sd])?;
        if sd <= 0.0 {
            return Err(invalid("normal", "sd > 0"));
        }
        Self::assemble(
            Family::Normal { mean, sd },
            SupportInterval::real_line(),
            mean,
            sd * sd,
        )
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0).expect("valid parameters")
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        check_finite("gamma", &[shape, rate])?;
        if shape <= 0.0 || rate <= 0.0 {
            return Err(invalid("gamma", "shape > 0 and rate > 0"));
        }
        Self::assemble(
            Family::Gamma { shape, rate },
            SupportInterval::new(0.0, f64::INFINITY)?,
            shape / rate,
            shape / (rate * rate),
        )
    }

    /// Chi-square with `dof` degrees of freedom, i.e. `Gamma(dof/2, 1/2)`.
    pub fn chi_square(dof: f64) -> Result<Self> {
        Self::gamma(dof / 2.0, 0.5)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        check_finite("uniform", &[lower, upper])?;
        if lower >= upper {
            return Err(invalid("uniform", "lower < upper"));
        }
        let w = upper - lower;
        Self::assemble(
            Family::Uniform { lower, upper },
            SupportInterval::new(lower, upper)?,
            0.5 * (lower + upper),
            w * w / 12.0,
        )
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        check_finite("beta", &[alpha, beta])?;
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(invalid("beta", "alpha > 0 and beta > 0"));
        }
        let s = alpha + beta;
        Self::assemble(
            Family::Beta { alpha, beta },
            SupportInterval::new(0.0, 1.0)?,
            alpha / s,
            alpha * beta / (s * s * (s + 1.0)),
        )
    }

    pub fn lognormal(delta: f64, sigma: f64) -> Result<Self> {
        check_finite("lognormal", &[delta, sigma])?;
        if sigma <= 0.0 {
            return Err(invalid("lognormal", "sigma > 0"));
        }
        let s2 = sigma * sigma;
        Self::assemble(
            Family::LogNormal { delta, sigma },
            SupportInterval::new(0.0, f64::INFINITY)?,
            (delta + 0.5 * s2).exp(),
            s2.exp_m1() * (2.0 * delta + s2).exp(),
        )
    }

    /// Pareto (Lomax) law. The variance is infinite for `alpha <= 2`.
    pub fn pareto(alpha: f64) -> Result<Self> {
        check_finite("pareto", &[alpha])?;
        if alpha <= 1.0 {
            return Err(invalid("pareto", "alpha > 1 (finite mean)"));
        }
        let variance = if alpha > 2.0 {
            alpha / ((alpha - 1.0).powi(2) * (alpha - 2.0))
        } else {
            f64::INFINITY
        };
        Self::assemble(
            Family::Pareto { alpha },
            SupportInterval::new(0.0, f64::INFINITY)?,
            1.0 / (alpha - 1.0),
            variance,
        )
    }

    pub fn laplace(alpha: f64) -> Result<Self> {
        check_finite("laplace", &[alpha])?;
        if alpha <= 0.0 {
            return Err(invalid("laplace", "alpha > 0"));
        }
        Self::assemble(
            Family::Laplace { alpha },
            SupportInterval::real_line(),
            0.0,
            2.0 / (alpha * alpha),
        )
    }

    /// Builds a family from its tag and positional parameters; missing
    /// parameters fall back to the defaults used throughout the worked
    /// examples (chi-square(1), uniform(0,1), beta(1/2,1), lognormal(0,1),
    /// pareto(2), laplace(1)).
    pub fn make_family(tag: FamilyTag, params: &[f64]) -> Result<Self> {
        let p = |i: usize, d: f64| params.get(i).copied().unwrap_or(d);
        match tag {
            FamilyTag::Normal => Self::normal(p(0, 0.0), p(1, 1.0)),
            FamilyTag::Gamma => Self::gamma(p(0, 0.5), p(1, 0.5)),
            FamilyTag::Uniform => Self::uniform(p(0, 0.0), p(1, 1.0)),
            FamilyTag::Beta => Self::beta(p(0, 0.5), p(1, 1.0)),
            FamilyTag::LogNormal => Self::lognormal(p(0, 0.0), p(1, 1.0)),
            FamilyTag::Pareto => Self::pareto(p(0, 2.0)),
            FamilyTag::Laplace => Self::laplace(p(0, 1.0)),
            FamilyTag::Tabulated => Err(Error::Config(
                "tabulated densities are built from a grid, not parameters".into(),
            )),
        }
    }

    /// Tabulated density from samples `values[i] = p(grid[i])`; the
    /// interpolant is renormalised to integrate to one.
    pub fn make_tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let tab = Tabulated::new(grid, values)?;
        let support = SupportInterval::new(tab.lower(), tab.upper())?;
        let (mean, variance) = (tab.mean, tab.variance);
        Self::assemble(Family::Tabulated(Arc::new(tab)), support, mean, variance)
    }

    /// Two-column CSV `(x, p(x))`, optional header line.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Tabulated(e.to_string()))?;
            if record.len() < 2 {
                return Err(Error::Tabulated(format!(
                    "row {} has fewer than two columns",
                    row + 1
                )));
            }
            let x = record[0].parse::<f64>();
            let y = record[1].parse::<f64>();
            match (x, y) {
                (Ok(x), Ok(y)) => {
                    grid.push(x);
                    values.push(y);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::Tabulated(format!(
                        "row {} is not numeric: {:?}",
                        row + 1,
                        record
                    )))
                }
            }
        }
        Self::make_tabulated(grid, values)
    }

    fn assemble(
        family: Family,
        support: SupportInterval,
        mean: f64,
        variance: f64,
    ) -> Result<Self> {
        let mut d = Self {
            family,
            support,
            mean,
            variance,
            quad_range: (support.lower, support.upper),
            median: f64::NAN,
        };
        d.median = d.quantile(0.5);
        let lo = if support.lower.is_finite() {
            support.lower
        } else {
            d.quantile(TAIL_QUANTILE)
        };
        let hi = if support.upper.is_finite() {
            support.upper
        } else {
            d.quantile(1.0 - TAIL_QUANTILE)
        };
        d.quad_range = (lo, hi);
        Ok(d)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn tag(&self) -> FamilyTag {
        self.family.tag()
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Range used when a quadrature has to be truncated: the support,
    /// with infinite ends replaced by the `1e-12` / `1 - 1e-12` quantiles.
    pub fn quadrature_range(&self) -> (f64, f64) {
        self.quad_range
    }

    pub fn label(&self) -> String {
        let params = self.family.params();
        if params.is_empty() {
            self.tag().to_string()
        } else {
            let p: Vec<String> = params.iter().map(|v| format!("{v}")).collect();
            format!("{}({})", self.tag(), p.join(","))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            // tabulated grids carry a value at their end knots
            if let Family::Tabulated(t) = &self.family {
                if x == t.lower() || x == t.upper() {
                    return t.pdf(x);
                }
            }
            return 0.0;
        }
        match &self.family {
            Family::Normal { mean, sd } => norm_pdf((x - mean) / sd) / sd,
            Family::Uniform { lower, upper } => 1.0 / (upper - lower),
            Family::Pareto { alpha } => alpha * (1.0 + x).powf(-alpha - 1.0),
            Family::Laplace { alpha } => 0.5 * alpha * (-alpha * x.abs()).exp(),
            Family::Tabulated(t) => t.pdf(x),
            _ => self.ln_pdf(x).exp(),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return self.pdf(x).ln();
        }
        match &self.family {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - LN_SQRT_2PI - sd.ln()
            }
            Family::Gamma { shape, rate } => {
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(*shape)
            }
            Family::Uniform { lower, upper } => -(upper - lower).ln(),
            Family::Beta { alpha, beta } => {
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_beta(*alpha, *beta)
            }
            Family::LogNormal { delta, sigma } => {
                let z = (x.ln() - delta) / sigma;
                -0.5 * z * z - LN_SQRT_2PI - sigma.ln() - x.ln()
            }
            Family::Pareto { alpha } => alpha.ln() - (alpha + 1.0) * x.ln_1p(),
            Family::Laplace { alpha } => (0.5 * alpha).ln() - alpha * x.abs(),
            Family::Tabulated(t) => t.pdf(x).ln(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lower {
            return 0.0;
        }
        if x >= self.support.upper {
            return 1.0;
        }
        match &self.family {
            Family::Normal { mean, sd } => norm_cdf((x - mean) / sd),
            Family::Gamma { shape, rate } => gamma_p(*shape, rate * x),
            Family::Uniform { lower, upper } => (x - lower) / (upper - lower),
            Family::Beta { alpha, beta } => beta_reg(*alpha, *beta, x),
            Family::LogNormal { delta, sigma } => norm_cdf((x.ln() - delta) / sigma),
            Family::Pareto { alpha } => -(-alpha * x.ln_1p()).exp_m1(),
            Family::Laplace { alpha } => {
                if x <= 0.0 {
                    0.5 * (alpha * x).exp()
                } else {
                    1.0 - 0.5 * (-alpha * x).exp()
                }
            }
            Family::Tabulated(t) => t.cdf(x),
        }
    }

    /// Upper tail `1 - F(x)`, accurate where it is small.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= self.support.lower {
            return 1.0;
        }
        if x >= self.support.upper {
            return 0.0;
        }
        match &self.family {
            Family::Normal { mean, sd } => norm_sf((x - mean) / sd),
            Family::Gamma { shape, rate } => gamma_q(*shape, rate * x),
            Family::Uniform { lower, upper } => (upper - x) / (upper - lower),
            Family::Beta { alpha, beta } => beta_reg(*beta, *alpha, 1.0 - x),
            Family::LogNormal { delta, sigma } => norm_sf((x.ln() - delta) / sigma),
            Family::Pareto { alpha } => (-alpha * x.ln_1p()).exp(),
            Family::Laplace { alpha } => {
                if x <= 0.0 {
                    1.0 - 0.5 * (alpha * x).exp()
                } else {
                    0.5 * (-alpha * x).exp()
                }
            }
            Family::Tabulated(t) => t.sf(x),
        }
    }

    /// `(pdf(x), cdf(x))`; NaN input is a domain error.
    pub fn eval_pdf_cdf(&self, x: f64) -> Result<(f64, f64)> {
        if x.is_nan() {
            return Err(Error::Domain("density evaluated at NaN".into()));
        }
        Ok((self.pdf(x), self.cdf(x)))
    }

    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return self.support.lower;
        }
        if p >= 1.0 {
            return self.support.upper;
        }
        match &self.family {
            Family::Normal { mean, sd } => mean + sd * norm_quantile(p),
            Family::Uniform { lower, upper } => lower + p * (upper - lower),
            Family::LogNormal { delta, sigma } => (delta + sigma * norm_quantile(p)).exp(),
            Family::Pareto { alpha } => ((-p).ln_1p() * (-1.0 / alpha)).exp_m1(),
            Family::Laplace { alpha } => {
                if p < 0.5 {
                    (2.0 * p).ln() / alpha
                } else {
                    -(2.0 * (1.0 - p)).ln() / alpha
                }
            }
            _ => self.invert_cdf(p),
        }
    }

    fn invert_cdf(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = match &self.family {
            Family::Tabulated(t) => (t.lower(), t.upper()),
            Family::Beta { .. } => (0.0, 1.0),
            _ => {
                let mut hi = self.mean.max(1.0);
                while self.sf(hi) > (1.0 - p).min(p) && hi < 1e300 {
                    hi *= 2.0;
                }
                (self.support.lower.max(0.0), hi)
            }
        };
        if p <= 0.5 {
            if self.support.lower.is_finite() && lo == self.support.lower {
                // tiny lower quantiles of gamma/beta: shrink bracket geometrically first
                let mut probe = 0.5 * (lo + hi);
                while self.cdf(probe) > p && probe - lo > 1e-300 {
                    hi = probe;
                    probe = lo + 0.5 * (probe - lo);
                    if self.cdf(probe) <= p {
                        lo = probe;
                        break;
                    }
                }
            }
            bisect(|x| self.cdf(x), p, lo, hi, 300)
        } else {
            let q = 1.0 - p;
            bisect(|x| -self.sf(x), -q, lo, hi, 300)
        }
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    /// `∫_l^x y p(y) dy`.
    pub fn partial_first_moment(&self, x: f64) -> Result<f64> {
        if x.is_nan() || !self.support.contains_closed(x) {
            return Err(Error::Domain(format!(
                "partial first moment requested at {x} outside [{}, {}]",
                self.support.lower, self.support.upper
            )));
        }
        if x == self.support.lower {
            return Ok(0.0);
        }
        if x == self.support.upper {
            return Ok(self.mean);
        }
        Ok(match &self.family {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                mean * norm_cdf(z) - sd * norm_pdf(z)
            }
            Family::Gamma { shape, rate } => shape / rate * gamma_p(shape + 1.0, rate * x),
            Family::Uniform { lower, upper } => 0.5 * (x * x - lower * lower) / (upper - lower),
            Family::Beta { alpha, beta } => {
                alpha / (alpha + beta) * beta_reg(alpha + 1.0, *beta, x)
            }
            Family::LogNormal { delta, sigma } => {
                let z = (x.ln() - delta) / sigma;
                self.mean * norm_cdf(z - sigma)
            }
            Family::Pareto { alpha } => {
                let t = x.ln_1p();
                alpha * ((1.0 - alpha) * t).exp_m1() / (1.0 - alpha) + (-alpha * t).exp_m1()
            }
            Family::Laplace { alpha } => laplace_lower_moment(*alpha, x),
            Family::Tabulated(t) => t.partial_first_moment(x),
        })
    }

    /// `∫_x^u y p(y) dy`, accurate in the upper tail.
    pub fn upper_first_moment(&self, x: f64) -> Result<f64> {
        if x.is_nan() || !self.support.contains_closed(x) {
            return Err(Error::Domain(format!(
                "upper first moment requested at {x}"
            )));
        }
        if x == self.support.upper {
            return Ok(0.0);
        }
        if x == self.support.lower {
            return Ok(self.mean);
        }
        Ok(match &self.family {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                mean * norm_sf(z) + sd * norm_pdf(z)
            }
            Family::Gamma { shape, rate } => shape / rate * gamma_q(shape + 1.0, rate * x),
            Family::Uniform { upper, lower } => 0.5 * (upper * upper - x * x) / (upper - lower),
            Family::Beta { alpha, beta } => {
                alpha / (alpha + beta) * beta_reg(*beta, alpha + 1.0, 1.0 - x)
            }
            Family::LogNormal { delta, sigma } => {
                let z = (x.ln() - delta) / sigma;
                self.mean * norm_sf(z - sigma)
            }
            Family::Pareto { alpha } => {
                let t = x.ln_1p();
                alpha * ((1.0 - alpha) * t).exp() / (alpha - 1.0) - (-alpha * t).exp()
            }
            Family::Laplace { alpha } => -laplace_lower_moment(*alpha, x),
            Family::Tabulated(t) => t.mean - t.partial_first_moment(x),
        })
    }

    /// Equal-probability grid of `n` points between the tail quantiles
    /// `eps` and `1 - eps` (inclusive).
    pub fn quantile_grid(&self, n: usize, eps: f64) -> Vec<f64> {
        assert!(n >= 2);
        let mut g: Vec<f64> = (0..n)
            .map(|i| {
                let p = eps + (1.0 - 2.0 * eps) * i as f64 / (n - 1) as f64;
                self.quantile(p)
            })
            .collect();
        g.dedup();
        g
    }
}

fn laplace_lower_moment(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.5 * (alpha * x).exp() * (x - 1.0 / alpha)
    } else {
        -(-alpha * x).exp() * (1.0 + alpha * x) / (2.0 * alpha)
    }
}

/// Monotone-cubic density interpolant with exact cumulative tables.
#[derive(Debug, Clone)]
pub struct Tabulated {
    interp: Pchip,
    cum: Vec<f64>,
    cum_y: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl Tabulated {
    pub const MIN_POINTS: usize = 8;

    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Tabulated("grid and values differ in length".into()));
        }
        if grid.len() < Self::MIN_POINTS {
            return Err(Error::Tabulated(format!(
                "need at least {} grid points, got {}",
                Self::MIN_POINTS,
                grid.len()
            )));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Tabulated("non-finite grid point or value".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Tabulated("grid must be strictly ascending".into()));
        }
        if let Some(v) = values.iter().find(|v| **v < 0.0) {
            return Err(Error::Tabulated(format!("negative density value {v}")));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::Tabulated("all density values are zero".into()));
        }
        if let Some(i) = (1..values.len() - 1).find(|&i| values[i] == 0.0) {
            return Err(Error::Tabulated(format!(
                "density vanishes at interior grid point {}",
                grid[i]
            )));
        }
        let raw = Pchip::new(grid.clone(), values.clone());
        let total: f64 = segment_integrals(&raw, |_| 1.0).iter().sum();
        let scaled: Vec<f64> = values.iter().map(|v| v / total).collect();
        let interp = Pchip::new(grid, scaled);
        let cum = cumulative(&segment_integrals(&interp, |_| 1.0));
        let cum_y = cumulative(&segment_integrals(&interp, |y| y));
        let mean = *cum_y.last().expect("non-empty");
        let second: f64 = segment_integrals(&interp, |y| (y - mean) * (y - mean))
            .iter()
            .sum();
        Ok(Self {
            interp,
            cum,
            cum_y,
            mean,
            variance: second,
        })
    }

    pub fn lower(&self) -> f64 {
        self.interp.knots()[0]
    }

    pub fn upper(&self) -> f64 {
        *self.interp.knots().last().expect("non-empty")
    }

    pub fn grid(&self) -> &[f64] {
        self.interp.knots()
    }

    pub fn values(&self) -> &[f64] {
        self.interp.values()
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lower() || x > self.upper() {
            return 0.0;
        }
        self.interp.eval(x).max(0.0)
    }

    fn partial(&self, x: f64, table: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        let i = self.interp.segment_of(x);
        let x0 = self.interp.knots()[i];
        let gl = GaussLegendre::new(3);
        table[i] + gl.integrate(|y| weight(y) * self.interp.eval(y), x0, x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.partial(x, &self.cum, |_| 1.0).clamp(0.0, 1.0)
    }

    fn sf(&self, x: f64) -> f64 {
        let i = self.interp.segment_of(x);
        let x1 = self.interp.knots()[i + 1];
        let gl = GaussLegendre::new(3);
        let tail = 1.0 - self.cum[i + 1];
        (tail + gl.integrate(|y| self.interp.eval(y), x, x1)).clamp(0.0, 1.0)
    }

    fn partial_first_moment(&self, x: f64) -> f64 {
        self.partial(x, &self.cum_y, |y| y)
    }
}

// Exact per-segment integrals of weight(y) * interpolant for polynomial
// weights of degree <= 2 (3-point Gauss-Legendre is exact to degree 5).
fn segment_integrals(p: &Pchip, weight: impl Fn(f64) -> f64) -> Vec<f64> {
    let gl = GaussLegendre::new(3);
    p.knots()
        .windows(2)
        .map(|w| gl.integrate(|y| weight(y) * p.eval(y), w[0], w[1]))
        .collect()
}

fn cumulative(parts: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in parts {
        acc += v;
        out.push(acc);
    }
    out
}
