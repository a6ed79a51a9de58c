//! Gaussian functionals `Y = h(N)` and the Mehler-type representation
//!
//! ```text
//! <D(-L)^{-1}(Y - EY), DY> = ∫_0^1 da Σ_ij K_ij ∂_i h(N) E'[∂_j h(aN + √(1-a²) N')]
//! ```
//!
//! The `a`-integral uses a fixed Gauss–Legendre rule. The inner expectation
//! over the independent copy `N'` is either Monte Carlo or, for quadratic
//! and exponential-quadratic `h`, a closed Gaussian integral.

mod projection;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::io::KeyValueReport;
use crate::mc::{substream, Estimate};
use crate::numerics::GaussLegendre;
use crate::{Error, Result};

pub use projection::{
    conditional_projection, ConditionalProjection, ProjectionBin, ProjectionConfig, MIN_PAIRS,
};

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-10;
const GRADIENT_CHECK_POINTS: usize = 20;
const GRADIENT_CHECK_TOL: f64 = 1e-5;

/// Names accepted by [`GaussianFunctional::registered`].
pub const REGISTRY: &[&str] = &[
    "chi_square",
    "exp_neg_half_sum",
    "exp_neg_sum",
    "exp_quarter_sum_minus_one",
    "exp_single",
    "product_pairs",
    "half_diff_squares",
    "scaled_log_product",
];

/// The map `h: ℝⁿ → ℝ`.
#[derive(Clone)]
pub enum HForm {
    /// `½ xᵀQx + gᵀx + c`
    Quadratic {
        q: DMatrix<f64>,
        g: DVector<f64>,
        c: f64,
    },
    /// `c·exp(γ + Σ_i λ_i x_i² + β_i x_i) + d`
    ExpQuadratic {
        c: f64,
        gamma: f64,
        lambda: Vec<f64>,
        beta: Vec<f64>,
        d: f64,
    },
    Custom {
        h: ScalarField,
        grad: Option<GradientField>,
    },
}

impl fmt::Debug for HForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HForm::Quadratic { q, g, c } => f
                .debug_struct("Quadratic")
                .field("q", q)
                .field("g", g)
                .field("c", c)
                .finish(),
            HForm::ExpQuadratic {
                c,
                gamma,
                lambda,
                beta,
                d,
            } => f
                .debug_struct("ExpQuadratic")
                .field("c", c)
                .field("gamma", gamma)
                .field("lambda", lambda)
                .field("beta", beta)
                .field("d", d)
                .finish(),
            HForm::Custom { grad, .. } => f
                .debug_struct("Custom")
                .field("analytic_gradient", &grad.is_some())
                .finish(),
        }
    }
}

/// How the inner expectation `E'` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    InnerMc,
    InnerClosedForm,
}

impl fmt::Display for InnerMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InnerMethod::InnerMc => "inner-mc",
            InnerMethod::InnerClosedForm => "inner-closed-form",
        })
    }
}

/// Route selection for [`mehler_scalar_product`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// Closed form when available, inner Monte Carlo otherwise.
    #[default]
    Auto,
    ClosedForm,
    InnerMc,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Auto => "auto",
            Route::ClosedForm => "closed-form",
            Route::InnerMc => "inner-mc",
        })
    }
}

impl std::str::FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Route::Auto),
            "closed-form" | "closed_form" => Ok(Route::ClosedForm),
            "inner-mc" | "inner_mc" => Ok(Route::InnerMc),
            other => Err(Error::Config(format!(
                "unknown route '{other}'; expected auto, closed-form or inner-mc"
            ))),
        }
    }
}

/// `Y = h(N)` with `N ~ N(0, K)`.
#[derive(Debug, Clone)]
pub struct GaussianFunctional {
    label: String,
    dim: usize,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    identity: bool,
    form: HForm,
}

impl GaussianFunctional {
    pub fn new(label: impl Into<String>, cov: DMatrix<f64>, form: HForm) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(Error::Config(format!(
                "covariance must be square and non-empty, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let form_dim = match &form {
            HForm::Quadratic { q, g, .. } => {
                if q.nrows() != q.ncols() || g.len() != q.nrows() {
                    return Err(Error::Config(
                        "quadratic form has inconsistent dimensions".into(),
                    ));
                }
                Some(q.nrows())
            }
            HForm::ExpQuadratic { lambda, beta, .. } => {
                if lambda.len() != beta.len() {
                    return Err(Error::Config(
                        "exp-quadratic form has inconsistent dimensions".into(),
                    ));
                }
                Some(lambda.len())
            }
            HForm::Custom { .. } => None,
        };
        if let Some(n) = form_dim {
            if n != dim {
                return Err(Error::Config(format!(
                    "h acts on ℝ^{n} but the covariance is {dim}x{dim}"
                )));
            }
        }
        let factor = covariance_factor(&cov)?;
        let identity = is_identity(&cov);
        let f = Self {
            label: label.into(),
            dim,
            cov,
            factor,
            identity,
            form,
        };
        f.check_gradient()?;
        Ok(f)
    }

    /// Functional from the named registry with standard-normal coordinates.
    ///
    /// `n` overrides the default dimension; `scaled_log_product` requires it.
    pub fn registered(name: &str, n: Option<usize>) -> Result<Self> {
        match name {
            "chi_square" => Self::chi_square(n.unwrap_or(1)),
            "exp_neg_half_sum" => Self::exp_neg_half_sum(n.unwrap_or(2)),
            "exp_neg_sum" => Self::exp_neg_sum(n.unwrap_or(2)),
            "exp_quarter_sum_minus_one" => Self::exp_quarter_sum_minus_one(n.unwrap_or(2)),
            "exp_single" => match n {
                None | Some(1) => Self::exp_single(),
                Some(k) => Err(Error::Config(format!(
                    "exp_single is one-dimensional, got n = {k}"
                ))),
            },
            "product_pairs" => Self::product_pairs(n.unwrap_or(4)),
            "half_diff_squares" => Self::half_diff_squares(n.unwrap_or(4)),
            "scaled_log_product" => match n {
                Some(k) => Self::scaled_log_product(k),
                None => Err(Error::Config("scaled_log_product needs N".into())),
            },
            other => Err(Error::Config(format!(
                "unknown functional '{other}' (known: {})",
                REGISTRY.join(", ")
            ))),
        }
    }

    /// `Σ x_i²`, chi-square with `n` degrees of freedom.
    pub fn chi_square(n: usize) -> Result<Self> {
        positive_dim(n)?;
        let form = HForm::Quadratic {
            q: DMatrix::identity(n, n) * 2.0,
            g: DVector::zeros(n),
            c: 0.0,
        };
        Self::new(format!("chi_square({n})"), DMatrix::identity(n, n), form)
    }

    /// `exp(-½ Σ x_i²)`; uniform on (0,1) for `n = 2`.
    pub fn exp_neg_half_sum(n: usize) -> Result<Self> {
        Self::exp_sum(format!("exp_neg_half_sum({n})"), n, 1.0, 0.0, -0.5, 0.0)
    }

    /// `exp(-Σ x_i²)`; beta(1/2, 1) for `n = 2`.
    pub fn exp_neg_sum(n: usize) -> Result<Self> {
        Self::exp_sum(format!("exp_neg_sum({n})"), n, 1.0, 0.0, -1.0, 0.0)
    }

    /// `exp(¼ Σ x_i²) - 1`; Pareto(2) for `n = 2`.
    pub fn exp_quarter_sum_minus_one(n: usize) -> Result<Self> {
        Self::exp_sum(
            format!("exp_quarter_sum_minus_one({n})"),
            n,
            1.0,
            0.0,
            0.25,
            -1.0,
        )
    }

    /// `exp(x)`; lognormal(0, 1).
    pub fn exp_single() -> Result<Self> {
        let form = HForm::ExpQuadratic {
            c: 1.0,
            gamma: 0.0,
            lambda: vec![0.0],
            beta: vec![1.0],
            d: 0.0,
        };
        Self::new("exp_single", DMatrix::identity(1, 1), form)
    }

    /// `x_1 x_2 + x_3 x_4 + …`; Laplace(1) for `n = 4`.
    pub fn product_pairs(n: usize) -> Result<Self> {
        even_dim(n)?;
        let mut q = DMatrix::zeros(n, n);
        for k in (0..n).step_by(2) {
            q[(k, k + 1)] = 1.0;
            q[(k + 1, k)] = 1.0;
        }
        let form = HForm::Quadratic {
            q,
            g: DVector::zeros(n),
            c: 0.0,
        };
        Self::new(format!("product_pairs({n})"), DMatrix::identity(n, n), form)
    }

    /// `½ (x_1² + … + x_{n/2}² - x_{n/2+1}² - … - x_n²)`; Laplace(1) for `n = 4`.
    pub fn half_diff_squares(n: usize) -> Result<Self> {
        even_dim(n)?;
        let diag = DVector::from_fn(n, |i, _| if i < n / 2 { 1.0 } else { -1.0 });
        let form = HForm::Quadratic {
            q: DMatrix::from_diagonal(&diag),
            g: DVector::zeros(n),
            c: 0.0,
        };
        Self::new(
            format!("half_diff_squares({n})"),
            DMatrix::identity(n, n),
            form,
        )
    }

    /// `exp(-(2N)^{-1/2} Σ (x_i² - 1))`, which tends to lognormal(0, 1).
    pub fn scaled_log_product(n: usize) -> Result<Self> {
        positive_dim(n)?;
        let kappa = 1.0 / (2.0 * n as f64).sqrt();
        Self::exp_sum(
            format!("scaled_log_product({n})"),
            n,
            1.0,
            n as f64 * kappa,
            -kappa,
            0.0,
        )
    }

    /// User-supplied `h` with standard-normal coordinates. Without `grad`,
    /// central differences are used.
    pub fn custom(
        label: impl Into<String>,
        dim: usize,
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: Option<GradientField>,
    ) -> Result<Self> {
        positive_dim(dim)?;
        let form = HForm::Custom {
            h: Arc::new(h),
            grad,
        };
        Self::new(label, DMatrix::identity(dim, dim), form)
    }

    fn exp_sum(label: String, n: usize, c: f64, gamma: f64, lambda: f64, d: f64) -> Result<Self> {
        positive_dim(n)?;
        let form = HForm::ExpQuadratic {
            c,
            gamma,
            lambda: vec![lambda; n],
            beta: vec![0.0; n],
            d,
        };
        Self::new(label, DMatrix::identity(n, n), form)
    }

    /// Same `h` under a different covariance.
    pub fn with_covariance(self, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(self.label, cov, self.form)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn form(&self) -> &HForm {
        &self.form
    }

    /// Whether the inner expectation has a closed form.
    pub fn closed_form_capable(&self) -> bool {
        match &self.form {
            HForm::Quadratic { .. } => true,
            // the Gaussian integral needs 1 - 2λ(1 - a²) > 0 for all a in (0,1)
            HForm::ExpQuadratic { lambda, .. } => self.identity && lambda.iter().all(|l| *l < 0.5),
            HForm::Custom { .. } => false,
        }
    }

    /// Proposal scale `τ` for inner draws of `N'`. Gradients growing like
    /// `e^{λ|y|²}` with `λ > 0` have infinite or near-infinite variance under
    /// plain sampling as `a → 0`; drawing from `N(0, τ²K)` with
    /// `τ² = 1/(1 - 2λ)` and reweighting keeps the variance finite.
    pub fn inner_proposal_scale(&self) -> f64 {
        match &self.form {
            HForm::ExpQuadratic { lambda, .. } => {
                let l = lambda.iter().cloned().fold(0.0f64, f64::max);
                if l > 0.0 && l < 0.5 {
                    (1.0 / (1.0 - 2.0 * l)).sqrt()
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.form {
            HForm::Quadratic { q, g, c } => {
                let mut s = *c;
                for i in 0..self.dim {
                    let mut qi = 0.0;
                    for j in 0..self.dim {
                        qi += q[(i, j)] * x[j];
                    }
                    s += 0.5 * x[i] * qi + g[i] * x[i];
                }
                s
            }
            HForm::ExpQuadratic {
                c,
                gamma,
                lambda,
                beta,
                d,
            } => c * (gamma + exp_quadratic_exponent(lambda, beta, x)).exp() + d,
            HForm::Custom { h, .. } => h(x),
        }
    }

    /// `∇h(x)`, analytic where available, central differences otherwise.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.form {
            HForm::Quadratic { q, g, .. } => {
                for i in 0..self.dim {
                    let mut s = g[i];
                    for j in 0..self.dim {
                        s += 0.5 * (q[(i, j)] + q[(j, i)]) * x[j];
                    }
                    out[i] = s;
                }
            }
            HForm::ExpQuadratic {
                c,
                gamma,
                lambda,
                beta,
                ..
            } => {
                let e = c * (gamma + exp_quadratic_exponent(lambda, beta, x)).exp();
                for i in 0..self.dim {
                    out[i] = e * (2.0 * lambda[i] * x[i] + beta[i]);
                }
            }
            HForm::Custom { grad: Some(g), .. } => g(x, out),
            HForm::Custom { grad: None, .. } => self.fd_gradient(x, out),
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Gradient { point: x.to_vec() })
        }
    }

    /// Central differences with step `ε^{1/3} (1 + |x_i|)`.
    pub fn fd_gradient(&self, x: &[f64], out: &mut [f64]) {
        let eps = f64::EPSILON.cbrt();
        let mut y = x.to_vec();
        for i in 0..self.dim {
            let h = eps * (1.0 + x[i].abs());
            y[i] = x[i] + h;
            let up = self.eval(&y);
            y[i] = x[i] - h;
            let down = self.eval(&y);
            y[i] = x[i];
            out[i] = (up - down) / (2.0 * h);
        }
    }

    fn check_gradient(&self) -> Result<()> {
        if !matches!(self.form, HForm::Custom { grad: Some(_), .. }) {
            return Ok(());
        }
        let mut rng = substream(0, 0);
        let (mut x, mut g, mut fd) = (
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            vec![0.0; self.dim],
        );
        for _ in 0..GRADIENT_CHECK_POINTS {
            self.draw(&mut rng, &mut x);
            self.gradient(&x, &mut g)?;
            self.fd_gradient(&x, &mut fd);
            let scale = g.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            if g.iter()
                .zip(&fd)
                .any(|(a, b)| (a - b).abs() > GRADIENT_CHECK_TOL * scale)
            {
                return Err(Error::Gradient { point: x });
            }
        }
        Ok(())
    }

    /// One draw of `N ~ N(0, K)` into `out`.
    pub fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        draw_with_factor(&self.factor, self.identity, rng, out);
    }

    /// Realization `index` of `N` for a run seeded with `seed`.
    pub fn realization(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.draw(&mut substream(seed, index), &mut x);
        x
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("label", self.label.clone());
        r.push("dim", self.dim.to_string());
        r.push_bool("identity_covariance", self.identity);
        r.push_bool("closed_form_capable", self.closed_form_capable());
        r
    }
}

fn positive_dim(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Config("dimension must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn even_dim(n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        Err(Error::Config(format!(
            "dimension must be even and positive, got {n}"
        )))
    } else {
        Ok(())
    }
}

fn exp_quadratic_exponent(lambda: &[f64], beta: &[f64], x: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(beta)
        .zip(x)
        .map(|((l, b), x)| l * x * x + b * x)
        .sum()
}

fn is_identity(k: &DMatrix<f64>) -> bool {
    k.iter().enumerate().all(|(idx, v)| {
        let (i, j) = (idx % k.nrows(), idx / k.nrows());
        let want = if i == j { 1.0 } else { 0.0 };
        (v - want).abs() <= SYMMETRY_TOL
    })
}

/// Symmetric square root `V diag(√λ⁺) Vᵀ` after the symmetry and PSD checks.
fn covariance_factor(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::Config("covariance must be square".into()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("covariance has non-finite entries".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (k[(i, j)] - k[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::Config(format!(
                    "covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(k.clone());
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min < -EIGEN_TOL {
        return Err(Error::NotPsd(min));
    }
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
}

fn draw_with_factor<R: Rng>(factor: &DMatrix<f64>, identity: bool, rng: &mut R, out: &mut [f64]) {
    if identity {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        return;
    }
    let n = out.len();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..n {
        out[i] = (0..n).map(|j| factor[(i, j)] * z[j]).sum();
    }
}

/// `count` draws of `N(0, K)`; draw `i` comes from substream `i` of `seed`.
pub fn sample_gaussian_vector(k: &DMatrix<f64>, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let factor = covariance_factor(k)?;
    let identity = is_identity(k);
    let n = k.nrows();
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; n];
            draw_with_factor(&factor, identity, &mut substream(seed, i as u64), &mut x);
            x
        })
        .collect())
}

/// Closed forms of `E e^{-K_c(C + √(1-a²)Z)²}` and
/// `E (C + √(1-a²)Z) e^{-K_c(C + √(1-a²)Z)²}` for `Z ~ N(0,1)`.
pub fn aux_gaussian_integrals(kc: f64, c: f64, a: f64) -> Result<(f64, f64)> {
    let d = 1.0 + 2.0 * kc * (1.0 - a * a);
    if !(d > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "1 + 2K(1 - a²) = {d} must be positive (K = {kc}, a = {a})"
        )));
    }
    let e = (-c * c * kc / d).exp();
    Ok((e / d.sqrt(), c * e / (d * d.sqrt())))
}

/// Settings for the Mehler evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MehlerConfig {
    pub quad_nodes: usize,
    pub inner_samples: usize,
    pub seed: u64,
    pub route: Route,
    /// Standard deviation multiplier of the importance proposal for `N'`;
    /// `None` picks [`GaussianFunctional::inner_proposal_scale`].
    pub proposal_scale: Option<f64>,
}

impl Default for MehlerConfig {
    fn default() -> Self {
        Self {
            quad_nodes: 64,
            inner_samples: 1000,
            seed: 0,
            route: Route::Auto,
            proposal_scale: None,
        }
    }
}

/// `<D(-L)^{-1}(Y - EY), DY>` at one realization of `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProductEstimate {
    pub value: f64,
    /// Inner Monte Carlo error; zero on the closed-form route.
    pub stderr: f64,
    pub method: InnerMethod,
}

/// Evaluates the Mehler formula with a fixed Gauss–Legendre rule on (0,1).
#[derive(Debug, Clone)]
pub struct MehlerEngine {
    config: MehlerConfig,
    nodes: Vec<(f64, f64)>,
}

impl MehlerEngine {
    pub fn new(config: MehlerConfig) -> Result<Self> {
        if config.quad_nodes < 16 {
            return Err(Error::Config(format!(
                "quad_nodes must be at least 16, got {}",
                config.quad_nodes
            )));
        }
        let nodes = GaussLegendre::new(config.quad_nodes).on_interval(0.0, 1.0);
        Ok(Self { config, nodes })
    }

    pub fn config(&self) -> &MehlerConfig {
        &self.config
    }

    /// Route that [`Self::scalar_product`] will take for `f`.
    pub fn method_for(&self, f: &GaussianFunctional) -> Result<InnerMethod> {
        match (self.config.route, f.closed_form_capable()) {
            (Route::ClosedForm, false) => Err(Error::UnsupportedMode(format!(
                "no closed-form inner expectation for {}",
                f.label()
            ))),
            (Route::ClosedForm, true) | (Route::Auto, true) => Ok(InnerMethod::InnerClosedForm),
            _ if self.config.inner_samples == 0 => Err(Error::Config(
                "inner-mc route needs inner_samples >= 1".into(),
            )),
            _ => Ok(InnerMethod::InnerMc),
        }
    }

    /// Scalar product at `x`; inner draws use substream `index` of the
    /// configured seed.
    pub fn scalar_product(
        &self,
        f: &GaussianFunctional,
        x: &[f64],
        index: u64,
    ) -> Result<ScalarProductEstimate> {
        self.scalar_product_with_rng(f, x, &mut substream(self.config.seed, index))
    }

    pub fn scalar_product_with_rng(
        &self,
        f: &GaussianFunctional,
        x: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<ScalarProductEstimate> {
        if x.len() != f.dim() {
            return Err(Error::Config(format!(
                "realization has length {}, expected {}",
                x.len(),
                f.dim()
            )));
        }
        match self.method_for(f)? {
            InnerMethod::InnerClosedForm => Ok(ScalarProductEstimate {
                value: self.closed_form(f, x)?,
                stderr: 0.0,
                method: InnerMethod::InnerClosedForm,
            }),
            InnerMethod::InnerMc => self.inner_mc(f, x, rng),
        }
    }

    fn closed_form(&self, f: &GaussianFunctional, x: &[f64]) -> Result<f64> {
        let n = f.dim();
        match &f.form {
            HForm::Quadratic { .. } => {
                // E'[∇h(ax + sN')] = a Q x + g, linear in a
                let mut grad = vec![0.0; n];
                f.gradient(x, &mut grad)?;
                let mut at_zero = vec![0.0; n];
                f.gradient(&vec![0.0; n], &mut at_zero)?;
                let qx: Vec<f64> = grad.iter().zip(&at_zero).map(|(u, g)| u - g).collect();
                let kgrad = f.cov.clone() * DVector::from_column_slice(&grad);
                let mut total = 0.0;
                for &(a, w) in &self.nodes {
                    let s: f64 = (0..n).map(|j| kgrad[j] * (a * qx[j] + at_zero[j])).sum();
                    total += w * s;
                }
                Ok(total)
            }
            HForm::ExpQuadratic {
                c,
                gamma,
                lambda,
                beta,
                ..
            } => {
                let qx = exp_quadratic_exponent(lambda, beta, x);
                let mut total = 0.0;
                for &(a, w) in &self.nodes {
                    let s2 = 1.0 - a * a;
                    let mut log_m0 = 0.0;
                    let mut dot = 0.0;
                    // coordinates usually share λ, so ln D is reused
                    let (mut last_l, mut d, mut ln_d) = (f64::NAN, f64::NAN, f64::NAN);
                    for i in 0..n {
                        let (l, b) = (lambda[i], beta[i]);
                        let ci = a * x[i];
                        if l != last_l {
                            d = 1.0 - 2.0 * l * s2;
                            if !(d > 0.0) {
                                return Err(Error::Domain(format!(
                                    "1 - 2λ(1 - a²) = {d} at a = {a}"
                                )));
                            }
                            ln_d = d.ln();
                            last_l = l;
                        }
                        log_m0 += -0.5 * ln_d + (l * ci * ci + b * ci + 0.5 * b * b * s2) / d;
                        let tilted_mean = (ci + b * s2) / d;
                        dot += (2.0 * l * x[i] + b) * (2.0 * l * tilted_mean + b);
                    }
                    total += w * dot * (2.0 * gamma + qx + log_m0).exp();
                }
                let total = c * c * total;
                if total.is_finite() {
                    Ok(total)
                } else {
                    Err(Error::Gradient { point: x.to_vec() })
                }
            }
            HForm::Custom { .. } => Err(Error::UnsupportedMode(format!(
                "no closed-form inner expectation for {}",
                f.label()
            ))),
        }
    }

    fn inner_mc(
        &self,
        f: &GaussianFunctional,
        x: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<ScalarProductEstimate> {
        let n = f.dim();
        let mut grad = vec![0.0; n];
        f.gradient(x, &mut grad)?;
        let kgrad = f.cov.clone() * DVector::from_column_slice(&grad);
        let tau = self
            .config
            .proposal_scale
            .unwrap_or_else(|| f.inner_proposal_scale());
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(Error::Config(format!(
                "proposal scale must be finite and >= 1, got {tau}"
            )));
        }
        let mut z = vec![0.0; n];
        let mut noise = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut values = Vec::with_capacity(self.config.inner_samples);
        for _ in 0..self.config.inner_samples {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            // N' = R(τz) with weight φ(τz)/φ_τ(τz)
            let weight = if tau == 1.0 {
                1.0
            } else {
                let z2: f64 = z.iter().map(|v| v * v).sum();
                (n as f64 * tau.ln() - 0.5 * (tau * tau - 1.0) * z2).exp()
            };
            if f.identity {
                for i in 0..n {
                    noise[i] = tau * z[i];
                }
            } else {
                for i in 0..n {
                    noise[i] = tau * (0..n).map(|j| f.factor[(i, j)] * z[j]).sum::<f64>();
                }
            }
            let mut v = 0.0;
            for &(a, w) in &self.nodes {
                let s = (1.0 - a * a).sqrt();
                for i in 0..n {
                    y[i] = a * x[i] + s * noise[i];
                }
                f.gradient(&y, &mut gy)?;
                v += w * (0..n).map(|j| kgrad[j] * gy[j]).sum::<f64>();
            }
            values.push(weight * v);
        }
        let e = Estimate::from_samples(&values);
        Ok(ScalarProductEstimate {
            value: e.value,
            stderr: e.stderr,
            method: InnerMethod::InnerMc,
        })
    }
}

/// One-off evaluation of the Mehler formula at realization `x`.
pub fn mehler_scalar_product(
    f: &GaussianFunctional,
    x: &[f64],
    config: MehlerConfig,
) -> Result<ScalarProductEstimate> {
    MehlerEngine::new(config)?.scalar_product(f, x, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Quadrature;

    #[test]
    fn aux_integrals_degenerate_tilt() {
        let (m0, m1) = aux_gaussian_integrals(0.0, 1.7, 0.3).unwrap();
        assert_eq!(m0, 1.0);
        assert_eq!(m1, 1.7);
        let (m0, m1) = aux_gaussian_integrals(0.5, 0.0, 0.0).unwrap();
        assert!((m0 - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m1, 0.0);
        assert!(aux_gaussian_integrals(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn tilted_moments_match_quadrature() {
        // E (2λy + β) e^{λy² + βy} for y ~ N(C, s²), checked by quadrature
        let f = GaussianFunctional::new(
            "t",
            DMatrix::identity(1, 1),
            HForm::ExpQuadratic {
                c: 1.0,
                gamma: 0.0,
                lambda: vec![-0.3],
                beta: vec![0.7],
                d: 0.0,
            },
        )
        .unwrap();
        let engine = MehlerEngine::new(MehlerConfig::default()).unwrap();
        let x = 0.8;
        let q = Quadrature::precise();
        let gl = GaussLegendre::new(64).on_interval(0.0, 1.0);
        let mut direct = 0.0;
        for (a, w) in gl {
            let s = (1.0 - a * a).sqrt();
            let inner = q
                .integrate(
                    |z| {
                        let y = a * x + s * z;
                        (-0.6 * y + 0.7) * (-0.3 * y * y + 0.7 * y).exp() * (-0.5 * z * z).exp()
                            / (2.0 * std::f64::consts::PI).sqrt()
                    },
                    -40.0,
                    40.0,
                )
                .unwrap();
            direct += w * inner;
        }
        let gx = (-0.6 * x + 0.7) * (-0.3 * x * x + 0.7 * x).exp();
        let got = engine.scalar_product(&f, &[x], 0).unwrap().value;
        assert!(
            (got - gx * direct).abs() < 1e-12,
            "{got} vs {}",
            gx * direct
        );
    }

    #[test]
    fn covariance_checks() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            sample_gaussian_vector(&bad, 1, 0),
            Err(Error::NotPsd(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(sample_gaussian_vector(&asym, 1, 0).is_err());
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = covariance_factor(&k).unwrap();
        assert!((&r * &r - &k).abs().max() < 1e-12);
    }

    #[test]
    fn bad_analytic_gradient_is_rejected() {
        let wrong: GradientField = Arc::new(|x: &[f64], g: &mut [f64]| g[0] = x[0]);
        assert!(GaussianFunctional::custom("x^2", 1, |x| x[0] * x[0], Some(wrong)).is_err());
        let right: GradientField = Arc::new(|x: &[f64], g: &mut [f64]| g[0] = 2.0 * x[0]);
        assert!(GaussianFunctional::custom("x^2", 1, |x| x[0] * x[0], Some(right)).is_ok());
    }

    #[test]
    fn registry_names_resolve() {
        for name in REGISTRY {
            let n = if *name == "scaled_log_product" {
                Some(8)
            } else {
                None
            };
            let f = GaussianFunctional::registered(name, n).unwrap();
            assert!(f.closed_form_capable(), "{name}");
        }
        assert!(GaussianFunctional::registered("nope", None).is_err());
        assert!(GaussianFunctional::registered("product_pairs", Some(3)).is_err());
    }
}
