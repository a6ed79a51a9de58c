//! Stein equation `f - m_f = ½ a g' + b g` for the diffusion model of a
//! target density.
//!
//! The solution is `g = 2/(a p) ∫_l^x (f - m_f) p` below the median and
//! `g = -2/(a p) ∫_x^u (f - m_f) p` above it; each cumulative table is
//! summed from its own end so that tails keep relative accuracy.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::density::TargetDensity;
use crate::diffusion::{DiffusionModel, ValidationReport};
use crate::error::{Error, Result};
use crate::io::{write_csv, KeyValueReport};
use crate::numerics::{cumulative_sum, Quadrature};

/// Grid used to check the declared sup norm of a test function.
pub const NORM_CHECK_POINTS: usize = 2048;
/// Library size per kind (bumps and smoothed indicators).
pub const LIBRARY_HALF: usize = 16;
/// Ramp width relative to the `[q(0.01), q(0.99)]` range.
pub const RAMP_WIDTH_FRACTION: f64 = 1e-3;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestClass {
    /// Bounded and continuous.
    C0,
    /// Bounded with bounded derivative.
    C01,
    /// Smoothed indicator `1_{(l, z]}`.
    IndicatorSmoothed,
}

impl fmt::Display for TestClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestClass::C0 => "C0",
            TestClass::C01 => "C0_1",
            TestClass::IndicatorSmoothed => "indicator_smoothed",
        })
    }
}

#[derive(Clone)]
enum Shape {
    /// `height * exp(1 - 1/(1 - r^2))`, `r = (x - center)/radius`.
    Bump {
        center: f64,
        radius: f64,
        height: f64,
    },
    /// `height` below `start`, quintic descent to 0 at `start + width`.
    Ramp {
        start: f64,
        width: f64,
        height: f64,
    },
    Constant(f64),
    Custom {
        f: Scalar,
        df: Option<Scalar>,
    },
}

fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn smoothstep_prime(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Largest `|d/dr exp(1 - 1/(1 - r^2))|` on `(0, 1)`.
fn bump_slope_max() -> f64 {
    let d = |r: f64| {
        let s = 1.0 - r * r;
        2.0 * r / (s * s) * (1.0 - 1.0 / s).exp()
    };
    crate::numerics::roots::golden_max(d, 0.0, 1.0 - 1e-9, 200).1
}

/// A bounded test function with declared norms.
#[derive(Clone)]
pub struct TestFunction {
    shape: Shape,
    class: TestClass,
    sup_norm: f64,
    lip_norm: Option<f64>,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, {})", self.label, self.class)
    }
}

impl TestFunction {
    pub fn bump(center: f64, radius: f64, height: f64) -> Self {
        assert!(radius > 0.0);
        Self {
            shape: Shape::Bump {
                center,
                radius,
                height,
            },
            class: TestClass::C01,
            sup_norm: height.abs(),
            lip_norm: Some(height.abs() * bump_slope_max() / radius),
            label: format!("bump({center:.6},{radius:.6})"),
        }
    }

    /// Smoothed `1_{(l, z]}`: one below `z - w/2`, zero above `z + w/2`.
    pub fn smoothed_indicator(z: f64, width: f64) -> Self {
        assert!(width > 0.0);
        Self {
            shape: Shape::Ramp {
                start: z - 0.5 * width,
                width,
                height: 1.0,
            },
            class: TestClass::IndicatorSmoothed,
            sup_norm: 1.0,
            lip_norm: Some(1.875 / width),
            label: format!("indicator({z:.6})"),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            shape: Shape::Constant(c),
            class: TestClass::C01,
            sup_norm: c.abs(),
            lip_norm: Some(0.0),
            label: format!("constant({c})"),
        }
    }

    /// Arbitrary function; its sup (and Lipschitz) norm is measured on a
    /// 2048-point quantile grid of `density`.
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
        density: &TargetDensity,
    ) -> Self {
        let grid = norm_grid(density);
        let sup_norm = grid.iter().map(|&x| f(x).abs()).fold(0.0, f64::max);
        let lip_norm = df
            .as_ref()
            .map(|d| grid.iter().map(|&x| d(x).abs()).fold(0.0, f64::max));
        Self {
            class: if df.is_some() {
                TestClass::C01
            } else {
                TestClass::C0
            },
            shape: Shape::Custom { f: Arc::new(f), df },
            sup_norm,
            lip_norm,
            label: label.into(),
        }
    }

    /// `k * f`.
    pub fn scaled(&self, k: f64) -> Self {
        let shape = match &self.shape {
            Shape::Bump {
                center,
                radius,
                height,
            } => Shape::Bump {
                center: *center,
                radius: *radius,
                height: k * height,
            },
            Shape::Ramp {
                start,
                width,
                height,
            } => Shape::Ramp {
                start: *start,
                width: *width,
                height: k * height,
            },
            Shape::Constant(c) => Shape::Constant(k * c),
            Shape::Custom { f, df } => {
                let (f, df) = (f.clone(), df.clone());
                Shape::Custom {
                    f: Arc::new(move |x| k * f(x)),
                    df: df.map(|d| Arc::new(move |x| k * d(x)) as Scalar),
                }
            }
        };
        Self {
            shape,
            class: self.class,
            sup_norm: k.abs() * self.sup_norm,
            lip_norm: self.lip_norm.map(|l| k.abs() * l),
            label: format!("{k}*{}", self.label),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn class(&self) -> TestClass {
        self.class
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn lip_norm(&self) -> Option<f64> {
        self.lip_norm
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Bump {
                center,
                radius,
                height,
            } => {
                let r = (x - center) / radius;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            }
            Shape::Ramp {
                start,
                width,
                height,
            } => {
                let t = (x - start) / width;
                if t <= 0.0 {
                    *height
                } else if t >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - smoothstep(t))
                }
            }
            Shape::Constant(c) => *c,
            Shape::Custom { f, .. } => f(x),
        }
    }

    /// Analytic derivative where available.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        Some(match &self.shape {
            Shape::Bump {
                center,
                radius,
                height,
            } => {
                let r = (x - center) / radius;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    let s = 1.0 - r * r;
                    -height * 2.0 * r / (s * s) * (1.0 - 1.0 / s).exp() / radius
                }
            }
            Shape::Ramp {
                start,
                width,
                height,
            } => {
                let t = (x - start) / width;
                if t <= 0.0 || t >= 1.0 {
                    0.0
                } else {
                    -height * smoothstep_prime(t) / width
                }
            }
            Shape::Constant(_) => 0.0,
            Shape::Custom { df, .. } => return df.as_ref().map(|d| d(x)),
        })
    }

    /// Points where the function changes definition.
    fn breakpoints(&self) -> Vec<f64> {
        match self.shape {
            Shape::Bump { center, radius, .. } => vec![center - radius, center, center + radius],
            Shape::Ramp { start, width, .. } => vec![start, start + width],
            _ => vec![],
        }
    }

    /// Checks the declared sup norm on the density's norm grid.
    pub fn check_norms(&self, density: &TargetDensity) -> Result<()> {
        for x in norm_grid(density) {
            let v = self.eval(x).abs();
            if v > self.sup_norm + 1e-12 {
                return Err(Error::Domain(format!(
                    "{}: |f({x})| = {v} exceeds declared sup norm {}",
                    self.label, self.sup_norm
                )));
            }
        }
        if self.class == TestClass::C01 && self.lip_norm.is_none() {
            return Err(Error::Domain(format!(
                "{}: C0_1 function without a Lipschitz norm",
                self.label
            )));
        }
        Ok(())
    }
}

fn norm_grid(density: &TargetDensity) -> Vec<f64> {
    (0..NORM_CHECK_POINTS)
        .map(|i| density.quantile((i as f64 + 0.5) / NORM_CHECK_POINTS as f64))
        .collect()
}

/// The fixed library of 16 bumps on equal-probability cells of
/// `[q(0.01), q(0.99)]` and 16 smoothed indicators at the
/// `(i + 1/2)/16` quantiles.
pub fn test_library(density: &TargetDensity) -> Vec<TestFunction> {
    let n = LIBRARY_HALF;
    let edges: Vec<f64> = (0..=n)
        .map(|j| density.quantile(0.01 + 0.98 * j as f64 / n as f64))
        .collect();
    let mut lib: Vec<TestFunction> = edges
        .windows(2)
        .map(|w| TestFunction::bump(0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]), 1.0))
        .collect();
    let width = ramp_width(density);
    lib.extend((0..n).map(|i| {
        TestFunction::smoothed_indicator(density.quantile((i as f64 + 0.5) / n as f64), width)
    }));
    lib
}

/// Width of the smoothed indicators for a density.
pub fn ramp_width(density: &TargetDensity) -> f64 {
    RAMP_WIDTH_FRACTION * (density.quantile(0.99) - density.quantile(0.01))
}

fn quad() -> Quadrature {
    // bump edges are flat to all orders; a tiny absolute floor lets them settle
    Quadrature {
        abs_tol: 1e-17,
        rel_tol: 1e-13,
        max_panels: 200,
    }
}

/// `∫_a^b f p`, split at the function's breakpoints, using the cdf where
/// `f` is constant.
fn integrate_fp(f: &TestFunction, d: &TargetDensity, a: f64, b: f64) -> Result<f64> {
    if a >= b {
        return Ok(0.0);
    }
    let mass = |lo: f64, hi: f64| mass(d, lo, hi);
    match f.shape {
        Shape::Constant(c) => return Ok(c * mass(a, b)),
        Shape::Bump {
            center,
            radius,
            height,
        } => {
            let (lo, hi) = (a.max(center - radius), b.min(center + radius));
            if lo >= hi {
                return Ok(0.0);
            }
            // unit height keeps the quadrature path, and so the result, linear in f
            let unit = |y: f64| {
                let r = (y - center) / radius;
                if r.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - r * r)).exp()
                }
            };
            let q = quad();
            let mut total = 0.0;
            let mut cuts = vec![lo, hi];
            if center > lo && center < hi {
                cuts.insert(1, center);
            }
            for w in cuts.windows(2) {
                total += q.integrate(|y| unit(y) * d.pdf(y), w[0], w[1])?;
            }
            return Ok(height * total);
        }
        Shape::Ramp {
            start,
            width,
            height,
        } => {
            let end = start + width;
            let mut total = 0.0;
            if a < start {
                total += height * mass(a, b.min(start));
            }
            let (lo, hi) = (a.max(start), b.min(end));
            if lo < hi {
                let unit = |y: f64| 1.0 - smoothstep(((y - start) / width).clamp(0.0, 1.0));
                total += height * quad().integrate(|y| unit(y) * d.pdf(y), lo, hi)?;
            }
            return Ok(total);
        }
        Shape::Custom { .. } => {}
    }
    let mut cuts = vec![a];
    let m = d.median();
    if m > a && m < b {
        cuts.push(m);
    }
    cuts.push(b);
    let q = quad();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += q.integrate(|y| f.eval(y) * d.pdf(y), w[0], w[1])?;
    }
    Ok(total)
}

/// Probability of `[lo, hi]`, from the cdf below the median and from the
/// survival function above it.
fn mass(d: &TargetDensity, lo: f64, hi: f64) -> f64 {
    if hi <= d.median() {
        d.cdf(hi) - d.cdf(lo)
    } else {
        d.sf(lo) - d.sf(hi)
    }
}

/// `m_f = ∫ f p`.
pub fn mean_of(f: &TestFunction, density: &TargetDensity) -> Result<f64> {
    let s = density.support();
    let m = density.median();
    let mut cuts = vec![s.lower()];
    cuts.extend(
        f.breakpoints()
            .into_iter()
            .chain(std::iter::once(m))
            .filter(|x| s.contains(*x)),
    );
    if let Shape::Custom { .. } = f.shape {
        cuts.extend((1..10).map(|i| density.quantile(i as f64 / 10.0)));
    }
    cuts.push(s.upper());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate_fp(f, density, w[0], w[1])?;
    }
    Ok(total)
}

/// Sup-norm estimates of a solution on its grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionNorms {
    pub g: f64,
    pub a_g_prime: f64,
    pub g_prime: f64,
}

/// Grid representation of the Stein solution for one test function.
#[derive(Debug, Clone)]
pub struct SteinSolution {
    f: TestFunction,
    model: DiffusionModel,
    grid: Vec<f64>,
    g: Vec<f64>,
    g_prime: Vec<f64>,
    /// `∫_l^{x_i} (f - m_f) p`
    forward: Vec<f64>,
    /// `∫_{x_i}^u (f - m_f) p`
    backward: Vec<f64>,
    m_f: f64,
    median: f64,
    switch_gap: f64,
    norms: SolutionNorms,
}

/// Relative error assumed for grid values of `g`.
const G_REL_ERROR: f64 = 1e-12;
/// Largest tolerated rounding error in `g'` from the identity, relative to
/// `‖f‖_∞`.
const G_PRIME_TOL: f64 = 1e-8;

/// Solves the Stein equation for `f` on the model grid.
pub fn solve(f: &TestFunction, model: &DiffusionModel) -> Result<SteinSolution> {
    let d = model.density();
    let s = d.support();
    let median = d.median();
    let mut grid = model.grid();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    grid.extend(f.breakpoints().into_iter().filter(|x| *x > lo && *x < hi));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let n = grid.len();

    let mut cells = Vec::with_capacity(n - 1);
    for w in grid.windows(2) {
        cells.push(integrate_fp(f, d, w[0], w[1])?);
    }
    let head = integrate_fp(f, d, s.lower(), grid[0])?;
    let tail = integrate_fp(f, d, grid[n - 1], s.upper())?;
    let j = cumulative_sum(head, cells.iter().copied());
    let mut k = cumulative_sum(tail, cells.iter().rev().copied());
    k.reverse();
    let m_f = j[n - 1] + tail;

    let mut forward = vec![0.0; n];
    let mut backward = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut switch_gap: f64 = 0.0;
    for i in 0..n {
        let x = grid[i];
        forward[i] = j[i] - m_f * d.cdf(x);
        backward[i] = k[i] - m_f * d.sf(x);
        let ap = model.a(x) * d.pdf(x);
        if !(ap > 0.0) {
            return Err(Error::Singular { x, a: model.a(x) });
        }
        let gf = 2.0 * forward[i] / ap;
        let gb = -2.0 * backward[i] / ap;
        g[i] = if x <= median { gf } else { gb };
        // the two representations on the central half of the law
        let p = d.cdf(x);
        if (0.25..=0.75).contains(&p) {
            switch_gap = switch_gap.max((gf - gb).abs());
        }
    }
    // Near an endpoint where a -> 0 the identity divides a rounding-level
    // difference by a; those points take g' from the nearest stable one.
    let mut stable = vec![true; n];
    let f_scale = f.sup_norm();
    let mut g_prime: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid[i];
            let (fx, bg, a) = (f.eval(x), model.b(x) * g[i], model.a(x));
            stable[i] =
                2.0 * G_REL_ERROR * (fx.abs() + m_f.abs() + bg.abs()) / a <= G_PRIME_TOL * f_scale;
            2.0 * (fx - m_f - bg) / a
        })
        .collect();
    if let Some(first) = stable.iter().position(|&s| s) {
        let last = stable.iter().rposition(|&s| s).unwrap();
        let (lo, hi) = (g_prime[first], g_prime[last]);
        g_prime[..first].fill(lo);
        g_prime[last + 1..].fill(hi);
    }
    let norms = SolutionNorms {
        g: g.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
        a_g_prime: grid
            .iter()
            .zip(&g_prime)
            .fold(0.0, |acc: f64, (x, v)| acc.max((model.a(*x) * v).abs())),
        g_prime: g_prime.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
    };
    Ok(SteinSolution {
        f: f.clone(),
        model: model.clone(),
        grid,
        g,
        g_prime,
        forward,
        backward,
        m_f,
        median,
        switch_gap,
        norms,
    })
}

/// `g'(x) = 2 (f(x) - m_f - b(x) g(x)) / a(x)`.
pub fn derivative_via_identity(solution: &SteinSolution, x: f64) -> Result<f64> {
    solution.derivative_via_identity(x)
}

/// Maximum Stein residual with a central-difference `g'`.
pub fn residual(solution: &SteinSolution) -> f64 {
    solution.residual()
}

impl SteinSolution {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g
    }

    pub fn g_prime_values(&self) -> &[f64] {
        &self.g_prime
    }

    pub fn m_f(&self) -> f64 {
        self.m_f
    }

    pub fn norms(&self) -> SolutionNorms {
        self.norms
    }

    pub fn test_function(&self) -> &TestFunction {
        &self.f
    }

    /// Largest gap between the lower and upper representations over the
    /// central half of the law.
    pub fn representation_gap(&self) -> f64 {
        self.switch_gap
    }

    fn locate(&self, x: f64) -> Result<usize> {
        let n = self.grid.len();
        if !(x >= self.grid[0] && x <= self.grid[n - 1]) {
            return Err(Error::Boundary(x));
        }
        Ok(match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => i,
            Err(i) => i - 1,
        })
    }

    /// Signed mass `∫ (f - m_f) p` on the side of `x` used by the solution:
    /// forward below the median, backward above it.
    fn side_mass(&self, x: f64) -> Result<f64> {
        let i = self.locate(x)?;
        if x <= self.median {
            Ok(self.forward[i] + self.centred_mass(self.grid[i], x)?)
        } else if x == self.grid[i] {
            Ok(self.backward[i])
        } else {
            Ok(self.backward[i + 1] + self.centred_mass(x, self.grid[i + 1])?)
        }
    }

    /// `∫_a^b (f - m_f) p`.
    fn centred_mass(&self, a: f64, b: f64) -> Result<f64> {
        let d = self.model.density();
        Ok(integrate_fp(&self.f, d, a, b)? - self.m_f * mass(d, a, b))
    }

    /// `g` at any point inside the grid range.
    pub fn g_at(&self, x: f64) -> Result<f64> {
        let mass = self.side_mass(x)?;
        let ap = self.model.a(x) * self.model.density().pdf(x);
        Ok(if x <= self.median {
            2.0 * mass / ap
        } else {
            -2.0 * mass / ap
        })
    }

    pub fn derivative_via_identity(&self, x: f64) -> Result<f64> {
        let a = self.model.a(x);
        if !self.model.density().support().contains(x) || !(a > 0.0) {
            return Err(Error::Boundary(x));
        }
        let g = self.g_at(x)?;
        Ok(2.0 * (self.f.eval(x) - self.m_f - self.model.b(x) * g) / a)
    }

    fn fd_step(&self, x: f64) -> f64 {
        let d = self.model.density();
        let s = d.support();
        let scale = d.quantile(0.75) - d.quantile(0.25) + (x - self.median).abs();
        let mut h = 1e-7 * scale;
        for e in [s.lower(), s.upper()] {
            if e.is_finite() {
                h = h.min(0.5 * (x - e).abs());
            }
        }
        h
    }

    /// `g'(x)` by central differences; both shifted values share the
    /// cumulative mass at `x` and add the short local integrals.
    pub fn g_prime_fd(&self, x: f64) -> Result<f64> {
        let d = self.model.density();
        let h = self.fd_step(x);
        let base = self.side_mass(x)?;
        let (up, down) = (self.centred_mass(x, x + h)?, self.centred_mass(x - h, x)?);
        let ap = |y: f64| self.model.a(y) * d.pdf(y);
        let (gp, gm) = if x <= self.median {
            (
                2.0 * (base + up) / ap(x + h),
                2.0 * (base - down) / ap(x - h),
            )
        } else {
            (
                -2.0 * (base - up) / ap(x + h),
                -2.0 * (base + down) / ap(x - h),
            )
        };
        Ok((gp - gm) / (2.0 * h))
    }

    /// Pointwise residual `|f - m_f - ½ a g'_fd - b g|`.
    pub fn residual_at(&self, x: f64) -> Result<f64> {
        let g = self.g_at(x)?;
        let gp = self.g_prime_fd(x)?;
        Ok((self.f.eval(x) - self.m_f - 0.5 * self.model.a(x) * gp - self.model.b(x) * g).abs())
    }

    /// Maximum residual over the interior grid.
    pub fn residual(&self) -> f64 {
        self.grid
            .par_iter()
            .map(|&x| self.residual_at(x).unwrap_or(f64::INFINITY))
            .reduce(|| 0.0, f64::max)
    }

    /// CSV of `x, g, g', residual`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .grid
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                vec![
                    x,
                    self.g[i],
                    self.g_prime[i],
                    self.residual_at(x).unwrap_or(f64::NAN),
                ]
            })
            .collect();
        write_csv(out, &["x", "g", "g_prime", "residual"], rows)
    }
}

/// Function class a bound is stated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionClass {
    /// Indicators `1_{(l,z]}`: needs `sup |g'|`, bounded through `inf a > 0`.
    Kolmogorov,
    /// `C^1` functions with `‖f‖ + ‖f'‖ ≤ 1`: needs the Lipschitz route.
    Lipschitz,
}

impl fmt::Display for FunctionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionClass::Kolmogorov => "kolmogorov",
            FunctionClass::Lipschitz => "lipschitz",
        })
    }
}

/// Empirical norm constants over the test library.
#[derive(Debug, Clone, PartialEq)]
pub struct NormConstants {
    pub class: FunctionClass,
    /// `max ‖g‖ / ‖f‖`
    pub c1: f64,
    /// `max ‖a g'‖ / ‖f‖`
    pub c2: f64,
    /// `max ‖g'‖ / (‖f‖ + ‖f'‖)`
    pub c4: f64,
    pub inf_a: f64,
    pub argmax_c1: String,
    pub argmax_c2: String,
    pub argmax_c4: String,
    pub ramp_width: f64,
}

impl NormConstants {
    /// Constant multiplying the first term of the bound: `C2 / inf a` for
    /// the Kolmogorov class, `C4` for the Lipschitz class.
    pub fn c_g_prime(&self) -> f64 {
        match self.class {
            FunctionClass::Kolmogorov => self.c2 / self.inf_a,
            FunctionClass::Lipschitz => self.c4,
        }
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("class", self.class.to_string());
        r.push_num("c1", self.c1);
        r.push_num("c2", self.c2);
        r.push_num("c4", self.c4);
        r.push_num("inf_a", self.inf_a);
        r.push_num("c_g_prime", self.c_g_prime());
        r.push("argmax_c1", self.argmax_c1.clone());
        r.push("argmax_c2", self.argmax_c2.clone());
        r.push("argmax_c4", self.argmax_c4.clone());
        r.push_num("ramp_width", self.ramp_width);
        r
    }
}

/// Checks the hypotheses of the requested class against a validation
/// report.
pub fn check_hypotheses(report: &ValidationReport, class: FunctionClass) -> Result<()> {
    if !report.drift_monotone_at_ends() {
        return Err(Error::Hypothesis(
            "b is not non-increasing near both ends".into(),
        ));
    }
    match class {
        FunctionClass::Kolmogorov => {
            if !(report.inf_a > 0.0) {
                return Err(Error::Hypothesis(
                    "inf a = 0, so sup|g'| is not controlled on the Kolmogorov class; use the Lipschitz (C4) route".into(),
                ));
            }
        }
        FunctionClass::Lipschitz => {
            for (name, e) in [("lower", &report.lower), ("upper", &report.upper)] {
                if !(e.liminf_estimate > 0.0) {
                    let what = if e.finite { "a(x)/|x - end|" } else { "a(x)" };
                    return Err(Error::Hypothesis(format!(
                        "liminf of {what} at the {name} end is 0"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Solves every library function and returns the empirical constants.
pub fn estimate_norm_constants(
    model: &DiffusionModel,
    class: FunctionClass,
) -> Result<NormConstants> {
    let report = model.validate();
    check_hypotheses(&report, class)?;
    let lib = test_library(model.density());
    let sols: Vec<SteinSolution> = lib
        .par_iter()
        .map(|f| solve(f, model))
        .collect::<Result<_>>()?;
    let mut best = [
        (0.0, String::new()),
        (0.0, String::new()),
        (0.0, String::new()),
    ];
    for s in &sols {
        let f = s.test_function();
        let nrm = s.norms();
        let lip = f.lip_norm().unwrap_or(f64::INFINITY);
        let vals = [
            nrm.g / f.sup_norm(),
            nrm.a_g_prime / f.sup_norm(),
            nrm.g_prime / (f.sup_norm() + lip),
        ];
        for (b, v) in best.iter_mut().zip(vals) {
            if v > b.0 {
                *b = (v, f.label().to_string());
            }
        }
    }
    let [c1, c2, c4] = best;
    Ok(NormConstants {
        class,
        c1: c1.0,
        c2: c2.0,
        c4: c4.0,
        inf_a: report.inf_a,
        argmax_c1: c1.1,
        argmax_c2: c2.1,
        argmax_c4: c4.1,
        ramp_width: ramp_width(model.density()),
    })
}
