//! Drift and squared diffusion coefficient of the ergodic diffusion whose
//! invariant density is a given target.
//!
//! For a drift `b` that is positive left of `k`, negative right of `k` and
//! centred (`∫ b p = 0`), the coefficient is `a(x) = 2 ∫_l^x b p / p(x)`.
//! Built-in families have closed forms for the linear drift `b = -(x - m)`;
//! any density can be handled numerically through cached cumulative tables.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::density::{Family, FamilyTag, TargetDensity, TAIL_QUANTILE};
use crate::error::{Error, Result};
use crate::io::{write_csv, KeyValueReport};
use crate::numerics::special::gauss_window_ratio;
use crate::numerics::{cumulative_sum, Pchip, Quadrature};

/// Number of points in the cached quantile grid.
pub const GRID_POINTS: usize = 4096;
/// Points used for sign and positivity checks.
pub const CHECK_POINTS: usize = 512;
/// Tolerance on `∫ b p`.
pub const CENTERING_TOL: f64 = 1e-8;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum DriftForm {
    Linear { m: f64 },
    Custom(Scalar),
}

/// Drift `b` with its sign-change point `k`.
#[derive(Clone)]
pub struct DriftSpec {
    form: DriftForm,
    k: f64,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            DriftForm::Linear { m } => write!(f, "DriftSpec(-(x - {m}))"),
            DriftForm::Custom(_) => write!(f, "DriftSpec(custom, k = {})", self.k),
        }
    }
}

impl DriftSpec {
    /// `b(x) = -(x - m)`.
    pub fn linear(m: f64) -> Self {
        Self {
            form: DriftForm::Linear { m },
            k: m,
        }
    }

    /// The default drift for a density: linear around its mean.
    pub fn for_density(density: &TargetDensity) -> Self {
        Self::linear(density.mean())
    }

    pub fn custom(b: impl Fn(f64) -> f64 + Send + Sync + 'static, k: f64) -> Self {
        Self {
            form: DriftForm::Custom(Arc::new(b)),
            k,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            DriftForm::Linear { m } => -(x - m),
            DriftForm::Custom(b) => b(x),
        }
    }

    pub fn sign_change(&self) -> f64 {
        self.k
    }

    /// Centre of the linear drift, if the drift is linear.
    pub fn linear_center(&self) -> Option<f64> {
        match self.form {
            DriftForm::Linear { m } => Some(m),
            DriftForm::Custom(_) => None,
        }
    }

    /// Sign pattern on the interior check grid.
    pub fn sign_pattern_holds(&self, density: &TargetDensity) -> bool {
        let scale = 1.0 + self.k.abs();
        check_grid(density).iter().all(|&x| {
            let b = self.eval(x);
            if (x - self.k).abs() <= 1e-12 * scale {
                true
            } else if x < self.k {
                b > 0.0
            } else {
                b < 0.0
            }
        })
    }

    /// `∫_l^u b p`, split at the median and at `k`.
    pub fn centering_integral(&self, density: &TargetDensity) -> Result<f64> {
        let s = density.support();
        let mut cuts = vec![s.lower(), density.median()];
        if s.contains(self.k) {
            cuts.push(self.k);
        }
        cuts.push(s.upper());
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let q = Quadrature::with_tolerances(1e-13, 1e-12);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += q.integrate(|y| self.eval(y) * density.pdf(y), w[0], w[1])?;
        }
        Ok(total)
    }

    /// Checks the sign condition and the centring condition.
    pub fn check(&self, density: &TargetDensity) -> Result<()> {
        if !density.support().contains(self.k) {
            return Err(Error::Construction(format!(
                "sign-change point {} outside the support",
                self.k
            )));
        }
        if !self.sign_pattern_holds(density) {
            return Err(Error::Construction(format!(
                "drift must be positive below k = {} and negative above it",
                self.k
            )));
        }
        let c = self.centering_integral(density)?;
        if c.abs() > CENTERING_TOL {
            return Err(Error::Centering(c));
        }
        Ok(())
    }
}

fn check_grid(density: &TargetDensity) -> Vec<f64> {
    (0..CHECK_POINTS)
        .map(|i| density.quantile((i as f64 + 0.5) / CHECK_POINTS as f64))
        .collect()
}

/// How the coefficient `a` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    ClosedForm,
    Numeric,
}

impl fmt::Display for CoefficientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoefficientKind::ClosedForm => "closed-form",
            CoefficientKind::Numeric => "numeric",
        })
    }
}

#[derive(Debug, Clone)]
enum ClosedA {
    Constant(f64),
    /// `slope * x`
    Proportional(f64),
    /// `scale * (x - l) * (u - x)`
    Parabola {
        l: f64,
        u: f64,
        scale: f64,
    },
    LogNormal {
        m: f64,
        delta: f64,
        sigma: f64,
    },
    /// `scale * x * (1 + x)`
    Pareto {
        scale: f64,
    },
    /// `2 (1 + alpha |x|) / alpha^2`
    Laplace {
        alpha: f64,
    },
}

impl ClosedA {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            ClosedA::Constant(c) => c,
            ClosedA::Proportional(s) => s * x,
            ClosedA::Parabola { l, u, scale } => scale * (x - l) * (u - x),
            ClosedA::LogNormal { m, delta, sigma } => {
                let z = (x.ln() - delta) / sigma;
                2.0 * m * x * sigma * gauss_window_ratio(z, sigma)
            }
            ClosedA::Pareto { scale } => scale * x * (1.0 + x),
            ClosedA::Laplace { alpha } => 2.0 * (1.0 + alpha * x.abs()) / (alpha * alpha),
        }
    }
}

/// Cumulative tables of `∫ b p` on the quantile grid.
#[derive(Debug, Clone)]
struct NumericA {
    grid: Vec<f64>,
    lower_cum: Vec<f64>,
    upper_cum: Vec<f64>,
    a_grid: Vec<f64>,
    interp: Pchip,
}

#[derive(Debug, Clone)]
enum Repr {
    Closed(ClosedA, Arc<Vec<f64>>),
    Numeric(Arc<NumericA>),
}

/// Drift `b` and squared diffusion coefficient `a` on the support of the
/// target density.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    density: TargetDensity,
    drift: DriftSpec,
    repr: Repr,
}

fn local_quad() -> Quadrature {
    Quadrature {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_panels: 200,
    }
}

/// Model grid: equal-probability points plus the median and `k`, which are
/// where kinks and sign changes live.
fn model_grid(density: &TargetDensity, k: f64) -> Vec<f64> {
    let mut g = density.quantile_grid(GRID_POINTS, TAIL_QUANTILE);
    g.push(density.median());
    if density.support().contains(k) {
        g.push(k);
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g.retain(|x| density.support().contains(*x) || density.pdf(*x) > 0.0);
    g
}

impl DiffusionModel {
    /// Coefficient `a` built from cumulative integrals of `b p`.
    pub fn build_numeric(density: &TargetDensity, drift: DriftSpec) -> Result<Self> {
        drift.check(density)?;
        let k = drift.sign_change();
        let grid = model_grid(density, k);
        let n = grid.len();
        let q = local_quad();
        let bp = |y: f64| drift.eval(y) * density.pdf(y);
        let s = density.support();
        let mut cells = Vec::with_capacity(n - 1);
        for w in grid.windows(2) {
            cells.push(q.integrate(bp, w[0], w[1])?);
        }
        let lower_cum = cumulative_sum(q.integrate(bp, s.lower(), grid[0])?, cells.iter().copied());
        let mut upper_cum = cumulative_sum(
            q.integrate(bp, grid[n - 1], s.upper())?,
            cells.iter().rev().copied(),
        );
        upper_cum.reverse();
        let a_grid: Vec<f64> = grid
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let p = density.pdf(x);
                if x <= k {
                    2.0 * lower_cum[i] / p
                } else {
                    -2.0 * upper_cum[i] / p
                }
            })
            .collect();
        if let Some((i, &v)) = a_grid.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::Construction(format!(
                "a({}) = {v:e} is not positive",
                grid[i]
            )));
        }
        let interp = Pchip::new(grid.clone(), a_grid.clone());
        let model = Self {
            density: density.clone(),
            drift,
            repr: Repr::Numeric(Arc::new(NumericA {
                grid,
                lower_cum,
                upper_cum,
                a_grid,
                interp,
            })),
        };
        model.check_positive()?;
        Ok(model)
    }

    /// Default construction: linear drift around the mean, numeric `a`.
    pub fn build_default(density: &TargetDensity) -> Result<Self> {
        Self::build_numeric(density, DriftSpec::for_density(density))
    }

    /// Closed-form coefficients for a built-in family with the linear drift.
    pub fn closed_form(density: &TargetDensity) -> Result<Self> {
        let m = density.mean();
        let a = match *density.family() {
            Family::Normal { sd, .. } => ClosedA::Constant(2.0 * sd * sd),
            Family::Gamma { rate, .. } => ClosedA::Proportional(2.0 / rate),
            Family::Uniform { lower, upper } => ClosedA::Parabola {
                l: lower,
                u: upper,
                scale: 1.0,
            },
            Family::Beta { alpha, beta } => ClosedA::Parabola {
                l: 0.0,
                u: 1.0,
                scale: 2.0 / (alpha + beta),
            },
            Family::LogNormal { delta, sigma } => ClosedA::LogNormal { m, delta, sigma },
            Family::Pareto { alpha } => ClosedA::Pareto {
                scale: 2.0 / (alpha - 1.0),
            },
            Family::Laplace { alpha } => ClosedA::Laplace { alpha },
            Family::Tabulated(_) => return Err(Error::Unsupported(density.label())),
        };
        let grid = Arc::new(model_grid(density, m));
        Ok(Self {
            density: density.clone(),
            drift: DriftSpec::linear(m),
            repr: Repr::Closed(a, grid),
        })
    }

    /// Builds the family and its closed-form model in one step.
    pub fn closed_form_family(tag: FamilyTag, params: &[f64]) -> Result<Self> {
        if tag == FamilyTag::Tabulated {
            return Err(Error::Unsupported("tabulated".into()));
        }
        Self::closed_form(&TargetDensity::make_family(tag, params)?)
    }

    fn check_positive(&self) -> Result<()> {
        for x in check_grid(&self.density) {
            let a = self.a(x);
            if !(a > 0.0) {
                return Err(Error::Construction(format!(
                    "a({x}) = {a:e} is not positive"
                )));
            }
        }
        Ok(())
    }

    pub fn density(&self) -> &TargetDensity {
        &self.density
    }

    pub fn drift(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn kind(&self) -> CoefficientKind {
        match self.repr {
            Repr::Closed(..) => CoefficientKind::ClosedForm,
            Repr::Numeric(_) => CoefficientKind::Numeric,
        }
    }

    #[inline]
    pub fn b(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }

    /// Squared diffusion coefficient; zero outside the open support.
    pub fn a(&self, x: f64) -> f64 {
        if !self.density.support().contains(x) {
            return 0.0;
        }
        match &self.repr {
            Repr::Closed(c, _) => c.eval(x),
            Repr::Numeric(t) => self.numeric_a(t, x),
        }
    }

    /// Cheap evaluation for path simulation: exact for closed forms,
    /// monotone-cubic interpolation of the grid values otherwise.
    pub fn a_fast(&self, x: f64) -> f64 {
        if !self.density.support().contains(x) {
            return 0.0;
        }
        match &self.repr {
            Repr::Closed(c, _) => c.eval(x),
            Repr::Numeric(t) => {
                if x < t.grid[0] || x > t.grid[t.grid.len() - 1] {
                    self.numeric_a(t, x)
                } else {
                    t.interp.eval(x)
                }
            }
        }
    }

    fn numeric_a(&self, t: &NumericA, x: f64) -> f64 {
        let k = self.drift.sign_change();
        let d = &self.density;
        let q = local_quad();
        let n = t.grid.len();
        let p = d.pdf(x);
        if x < t.grid[0] || x > t.grid[n - 1] || p < 1e-280 {
            return self.scaled_a(x);
        }
        let i = match t.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => return t.a_grid[i],
            Err(i) => i - 1,
        };
        let bp = |y: f64| self.drift.eval(y) * d.pdf(y);
        if x <= k {
            let local = q.integrate(bp, t.grid[i], x).unwrap_or(f64::NAN);
            2.0 * (t.lower_cum[i] + local) / p
        } else {
            let local = q.integrate(bp, x, t.grid[i + 1]).unwrap_or(f64::NAN);
            -2.0 * (t.upper_cum[i + 1] + local) / p
        }
    }

    /// `a(x)` with the density ratio `p(y)/p(x)` formed in log space, for
    /// tail points where `p` itself is tiny.
    fn scaled_a(&self, x: f64) -> f64 {
        let d = &self.density;
        let s = d.support();
        let lp = d.ln_pdf(x);
        let f = |y: f64| self.drift.eval(y) * (d.ln_pdf(y) - lp).exp();
        let q = local_quad();
        let r = if x <= self.drift.sign_change() {
            q.integrate(f, s.lower(), x).map(|v| 2.0 * v)
        } else {
            q.integrate(f, x, s.upper()).map(|v| -2.0 * v)
        };
        r.unwrap_or(f64::NAN)
    }

    /// Quantile-spaced internal grid.
    pub fn grid(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Numeric(t) => t.grid.clone(),
            Repr::Closed(_, g) => g.to_vec(),
        }
    }

    /// Grid with matching `a` values.
    pub fn tabulate(&self) -> Vec<(f64, f64)> {
        match &self.repr {
            Repr::Numeric(t) => t
                .grid
                .iter()
                .copied()
                .zip(t.a_grid.iter().copied())
                .collect(),
            Repr::Closed(c, g) => g.iter().map(|&x| (x, c.eval(x))).collect(),
        }
    }

    /// CSV of `x, a(x), b(x), p(x)` on the grid.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self
            .tabulate()
            .into_iter()
            .map(|(x, a)| vec![x, a, self.b(x), self.density.pdf(x)]);
        write_csv(out, &["x", "a", "b", "p"], rows)
    }

    /// Checks of positivity, integrability and the boundary hypotheses used
    /// by the norm estimates.
    pub fn validate(&self) -> ValidationReport {
        let d = &self.density;
        let pts = check_grid(d);
        let (mut min_a, mut min_a_at) = (f64::INFINITY, f64::NAN);
        for &x in &pts {
            let a = self.a(x);
            if a < min_a || a.is_nan() {
                min_a = a;
                min_a_at = x;
            }
        }
        let expected_a = self.expected_a();
        let centering = self.drift.centering_integral(d).unwrap_or(f64::NAN);
        let drift_sign_ok = self.drift.sign_pattern_holds(d);
        let lower = self.end_report(End::Lower, &pts);
        let upper = self.end_report(End::Upper, &pts);
        let inf_a = if lower.degenerate || upper.degenerate {
            0.0
        } else {
            min_a.min(lower.a_at_probe).min(upper.a_at_probe)
        };
        ValidationReport {
            label: d.label(),
            kind: self.kind(),
            min_a,
            min_a_at,
            a_positive: min_a > 0.0,
            expected_a: expected_a.clone().unwrap_or(f64::NAN),
            expected_a_finite: expected_a.map(f64::is_finite).unwrap_or(false),
            centering,
            drift_sign_ok,
            inf_a,
            lower,
            upper,
        }
    }

    fn expected_a(&self) -> Result<f64> {
        let d = &self.density;
        let (lo, hi) = d.quadrature_range();
        let lo = if d.support().lower().is_finite() {
            d.support().lower()
        } else {
            lo
        };
        let hi = if d.support().upper().is_finite() {
            d.support().upper()
        } else {
            hi
        };
        let mut cuts: Vec<f64> = (1..10).map(|i| d.quantile(i as f64 / 10.0)).collect();
        cuts.insert(0, lo);
        cuts.push(hi);
        let q = Quadrature::default();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += q.integrate(|y| self.a(y) * d.pdf(y), w[0], w[1])?;
        }
        Ok(total)
    }

    fn end_report(&self, end: End, pts: &[f64]) -> EndReport {
        let d = &self.density;
        let s = d.support();
        let endpoint = match end {
            End::Lower => s.lower(),
            End::Upper => s.upper(),
        };
        let finite = endpoint.is_finite();
        let probe_at = |p: f64| match end {
            End::Lower => d.quantile(p),
            End::Upper => d.quantile(1.0 - p),
        };
        let probes: Vec<f64> = [1e-8, 1e-10, TAIL_QUANTILE]
            .iter()
            .map(|&p| probe_at(p))
            .collect();
        let ratio = |x: f64| {
            let a = self.a(x);
            if finite {
                a / (x - endpoint).abs()
            } else {
                a
            }
        };
        let liminf = probes
            .iter()
            .map(|&x| ratio(x))
            .fold(f64::INFINITY, f64::min);
        let a_vals: Vec<f64> = probes.iter().map(|&x| self.a(x)).collect();
        let a_mid = self.a(d.median());
        let a_at_probe = a_vals[a_vals.len() - 1];
        let decreasing = a_vals.windows(2).all(|w| w[1] <= w[0]);
        let degenerate = decreasing && a_at_probe < 0.01 * a_mid;
        // drift monotone (non-increasing) on the outer 5% of the check grid
        let tail = (pts.len() / 20).max(2);
        let window: Vec<f64> = match end {
            End::Lower => pts[..tail].to_vec(),
            End::Upper => pts[pts.len() - tail..].to_vec(),
        };
        let mut xs = probes.clone();
        xs.extend(window);
        xs.sort_by(f64::total_cmp);
        let b_non_increasing = xs.windows(2).all(|w| self.b(w[1]) <= self.b(w[0]) + 1e-12);
        EndReport {
            endpoint,
            finite,
            liminf_estimate: liminf,
            a_at_probe,
            degenerate,
            b_non_increasing,
        }
    }

    /// Density recovered from `a`, `b` and one anchor value.
    pub fn reconstruct_density(&self, c: f64, p_c: f64) -> Result<Reconstruction> {
        if !self.density.support().contains(c) {
            return Err(Error::Boundary(c));
        }
        if !(p_c > 0.0) {
            return Err(Error::Domain(format!(
                "anchor density {p_c} must be positive"
            )));
        }
        let mut knots = self.grid();
        knots.push(c);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let ci = knots.iter().position(|&x| x == c).expect("anchor inserted");
        let q = local_quad();
        let f = |y: f64| 2.0 * self.b(y) / self.a(y);
        // cells where the integral fails (next to a degenerate end) make the
        // reconstruction range-limited rather than failing outright
        let cell = |i: usize| q.integrate(f, knots[i], knots[i + 1]).unwrap_or(f64::NAN);
        let mut cum = cumulative_sum(0.0, (0..ci).rev().map(|i| -cell(i)));
        cum.reverse();
        cum.extend(
            cumulative_sum(0.0, (ci..knots.len() - 1).map(cell))
                .into_iter()
                .skip(1),
        );
        Ok(Reconstruction {
            model: self.clone(),
            c,
            scale: p_c * self.a(c),
            knots,
            cum,
        })
    }
}

#[derive(Clone, Copy)]
enum End {
    Lower,
    Upper,
}

/// Behaviour of `a` and `b` near one end of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct EndReport {
    pub endpoint: f64,
    pub finite: bool,
    /// `min a(x)/|x - endpoint|` (finite end) or `min a(x)` (infinite end)
    /// over probes at tail quantiles `1e-8`, `1e-10`, `1e-12`.
    pub liminf_estimate: f64,
    pub a_at_probe: f64,
    /// `a` decreases toward the end and falls below 1% of its median value.
    pub degenerate: bool,
    pub b_non_increasing: bool,
}

/// Outcome of [`DiffusionModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub label: String,
    pub kind: CoefficientKind,
    pub min_a: f64,
    pub min_a_at: f64,
    pub a_positive: bool,
    /// `E a(X)` under the truncation policy.
    pub expected_a: f64,
    pub expected_a_finite: bool,
    pub centering: f64,
    pub drift_sign_ok: bool,
    /// Estimate of `inf a`; zero when either end degenerates.
    pub inf_a: f64,
    pub lower: EndReport,
    pub upper: EndReport,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.a_positive
            && self.expected_a_finite
            && self.drift_sign_ok
            && self.centering.abs() <= CENTERING_TOL
    }

    /// Hypotheses for the sup-norm bounds on `g` and `a g'`.
    pub fn drift_monotone_at_ends(&self) -> bool {
        self.lower.b_non_increasing && self.upper.b_non_increasing
    }

    /// Kolmogorov-class route: bounded `g'` needs `inf a > 0`.
    pub fn kolmogorov_route_ok(&self) -> bool {
        self.drift_monotone_at_ends() && self.inf_a > 0.0
    }

    /// Lipschitz-class route: positive liminf of `a/(distance)` at finite
    /// ends and of `a` at infinite ends.
    pub fn lipschitz_route_ok(&self) -> bool {
        self.drift_monotone_at_ends()
            && self.lower.liminf_estimate > 0.0
            && self.upper.liminf_estimate > 0.0
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("density", self.label.clone());
        r.push("a_kind", self.kind.to_string());
        r.push_num("min_a", self.min_a);
        r.push_num("min_a_at", self.min_a_at);
        r.push_bool("a_positive", self.a_positive);
        r.push_num("expected_a", self.expected_a);
        r.push_bool("expected_a_finite", self.expected_a_finite);
        r.push_num("centering", self.centering);
        r.push_bool("drift_sign_ok", self.drift_sign_ok);
        r.push_num("inf_a", self.inf_a);
        for (name, e) in [("lower", &self.lower), ("upper", &self.upper)] {
            r.push_num(format!("{name}.endpoint"), e.endpoint);
            r.push_num(format!("{name}.liminf"), e.liminf_estimate);
            r.push_bool(format!("{name}.degenerate"), e.degenerate);
            r.push_bool(format!("{name}.b_non_increasing"), e.b_non_increasing);
        }
        r.push_bool("kolmogorov_route_ok", self.kolmogorov_route_ok());
        r.push_bool("lipschitz_route_ok", self.lipschitz_route_ok());
        r.push_bool("passed", self.passed());
        r
    }
}

/// `p(x) = p(c) a(c) / a(x) * exp(∫_c^x 2b/a)` on the model grid range.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    model: DiffusionModel,
    c: f64,
    scale: f64,
    knots: Vec<f64>,
    cum: Vec<f64>,
}

impl Reconstruction {
    /// Knot range over which the exponent table is finite.
    pub fn range(&self) -> (f64, f64) {
        let first = self.cum.iter().position(|v| v.is_finite()).unwrap_or(0);
        let last = self.cum.iter().rposition(|v| v.is_finite()).unwrap_or(0);
        (self.knots[first], self.knots[last])
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x == self.c {
            return Ok(self.scale / self.model.a(self.c));
        }
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!(
                "reconstruction is limited to [{lo}, {hi}]; {x} lies outside"
            )));
        }
        let i = match self.knots.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => return Ok(self.scale / self.model.a(x) * self.cum[i].exp()),
            Err(i) => i - 1,
        };
        let f = |y: f64| 2.0 * self.model.b(y) / self.model.a(y);
        let local = local_quad().integrate(f, self.knots[i], x)?;
        Ok(self.scale / self.model.a(x) * (self.cum[i] + local).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_numeric_midpoint() {
        let d = TargetDensity::uniform(0.0, 1.0).unwrap();
        let m = DiffusionModel::build_default(&d).unwrap();
        assert_relative_eq!(m.a(0.5), 0.25, max_relative = 1e-12);
        assert_relative_eq!(m.a(0.1), 0.09, max_relative = 1e-10);
    }

    #[test]
    fn laplace_numeric_at_zero() {
        let d = TargetDensity::laplace(1.0).unwrap();
        let m = DiffusionModel::build_default(&d).unwrap();
        assert_relative_eq!(m.a(0.0), 2.0, max_relative = 1e-10);
        assert_relative_eq!(m.a(-3.0), 8.0, max_relative = 1e-10);
    }

    #[test]
    fn closed_forms() {
        let n = DiffusionModel::closed_form_family(FamilyTag::Normal, &[]).unwrap();
        assert_eq!(n.a(3.3), 2.0);
        assert_eq!(n.b(0.7), -0.7);
        let c = DiffusionModel::closed_form(&TargetDensity::chi_square(1.0).unwrap()).unwrap();
        assert_relative_eq!(c.a(2.5), 10.0);
        assert_relative_eq!(c.b(2.5), -1.5);
        assert!(DiffusionModel::closed_form_family(FamilyTag::Tabulated, &[]).is_err());
    }

    #[test]
    fn off_centre_drift_rejected() {
        let d = TargetDensity::uniform(0.0, 1.0).unwrap();
        let e = DiffusionModel::build_numeric(&d, DriftSpec::linear(0.4)).unwrap_err();
        assert!(matches!(e, Error::Centering(_)));
    }

    #[test]
    fn cubic_drift_on_normal() {
        // ∫_{-∞}^x -y^3 φ(y) dy = φ(x)(x^2 + 2)
        let d = TargetDensity::standard_normal();
        let m = DiffusionModel::build_numeric(&d, DriftSpec::custom(|x| -x * x * x, 0.0)).unwrap();
        for x in [-2.0, -0.3, 0.0, 1.1, 4.0] {
            assert_relative_eq!(m.a(x), 2.0 * (x * x + 2.0), max_relative = 1e-9);
        }
    }

    #[test]
    fn tail_points_use_log_space() {
        let d = TargetDensity::standard_normal();
        let m = DiffusionModel::build_default(&d).unwrap();
        // far outside the grid p(x) underflows
        let a = m.a(40.0);
        assert_relative_eq!(a, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn validation_flags() {
        let u = DiffusionModel::closed_form(&TargetDensity::uniform(0.0, 1.0).unwrap()).unwrap();
        let r = u.validate();
        assert!(r.passed());
        assert!(r.lower.degenerate && r.upper.degenerate);
        assert_eq!(r.inf_a, 0.0);
        assert_relative_eq!(r.upper.liminf_estimate, 1.0, max_relative = 1e-6);
        assert!(r.lipschitz_route_ok());
        assert!(!r.kolmogorov_route_ok());
        let n = DiffusionModel::closed_form(&TargetDensity::standard_normal())
            .unwrap()
            .validate();
        assert_eq!(n.inf_a, 2.0);
        assert!(n.kolmogorov_route_ok());
        assert_relative_eq!(n.expected_a, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn reconstruction_at_anchor() {
        let m = DiffusionModel::closed_form(&TargetDensity::standard_normal()).unwrap();
        let r = m.reconstruct_density(0.0, 0.4).unwrap();
        assert_eq!(r.eval(0.0).unwrap(), 0.4);
        assert!(m.reconstruct_density(0.0, 0.0).is_err());
    }
}
