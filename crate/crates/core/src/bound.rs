//! Assembled Stein bounds for Gaussian functionals, the characterization
//! residuals, and reference distances between one-dimensional laws.

use rayon::prelude::*;

use crate::density::TargetDensity;
use crate::diffusion::DiffusionModel;
use crate::io::{fmt_num, KeyValueReport};
use crate::malliavin::{
    conditional_projection, GaussianFunctional, InnerMethod, MehlerConfig, MehlerEngine,
    ProjectionConfig, Route,
};
use crate::mc::{substream, Estimate};
use crate::numerics::{GaussLegendre, Quadrature};
use crate::stein::{estimate_norm_constants, FunctionClass, NormConstants};
use crate::{Error, Result};

/// Monte Carlo settings shared by the bound estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub samples: usize,
    pub inner_samples: usize,
    pub quad_nodes: usize,
    pub seed: u64,
    pub route: Route,
    pub bins: usize,
    /// `None` picks Kolmogorov when `inf a > 0` and Lipschitz otherwise.
    pub class: Option<FunctionClass>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            inner_samples: 1000,
            quad_nodes: 64,
            seed: 0,
            route: Route::Auto,
            bins: 64,
            class: None,
        }
    }
}

impl McConfig {
    pub fn mehler(&self) -> MehlerConfig {
        MehlerConfig {
            quad_nodes: self.quad_nodes,
            inner_samples: self.inner_samples,
            seed: self.seed,
            route: self.route,
            proposal_scale: None,
        }
    }
}

/// Per-realization draws: `Y`, the Stein residual
/// `t = ½a(Y) + <D(-L)^{-1}(b(Y) - Eb(Y)), DY>`, and `b(Y)`.
#[derive(Debug, Clone)]
pub struct TermSamples {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub method: InnerMethod,
    /// Largest inner Monte Carlo stderr over realizations.
    pub max_inner_stderr: f64,
}

/// Draws `mc.samples` realizations of `Y = h(N)` and the residual terms.
///
/// Realization `i` uses substream `i` of `mc.seed` for both `N` and the
/// inner copies, so results do not depend on thread scheduling.
pub fn sample_terms(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
) -> Result<TermSamples> {
    if model.drift().linear_center().is_none() {
        return Err(Error::UnsupportedMode(
            "bounds need the linear drift b(x) = -(x - m); its Malliavin term reduces to the Mehler product of Y".into(),
        ));
    }
    if mc.samples == 0 {
        return Err(Error::Config("samples must be positive".into()));
    }
    let engine = MehlerEngine::new(mc.mehler())?;
    let method = engine.method_for(f)?;
    let support = model.density().support();
    let rows: Vec<(f64, f64, f64, f64)> = (0..mc.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(mc.seed, i as u64);
            let mut x = vec![0.0; f.dim()];
            f.draw(&mut rng, &mut x);
            let y = f.eval(&x);
            if !support.contains(y) {
                return Err(Error::SupportViolation {
                    index: i,
                    value: y,
                    lower: support.lower(),
                    upper: support.upper(),
                });
            }
            let sp = engine.scalar_product_with_rng(f, &x, &mut rng)?;
            // b(Y) - Eb(Y) = -(Y - EY) for the linear drift
            Ok((y, 0.5 * model.a(y) - sp.value, model.b(y), sp.stderr))
        })
        .collect::<Result<_>>()?;
    Ok(TermSamples {
        y: rows.iter().map(|r| r.0).collect(),
        t: rows.iter().map(|r| r.1).collect(),
        b: rows.iter().map(|r| r.2).collect(),
        method,
        max_inner_stderr: rows.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

impl TermSamples {
    /// `E|t|`.
    pub fn term1_unconditional(&self) -> Estimate {
        Estimate::from_samples(&self.t.iter().map(|v| v.abs()).collect::<Vec<_>>())
    }

    /// `E|E[t | Y]|` from equal-count bins.
    pub fn term1_conditional(&self, bins: usize) -> Result<(Estimate, Vec<String>)> {
        let p = conditional_projection(
            &self.y,
            &self.t,
            ProjectionConfig {
                bins,
                ..Default::default()
            },
        )?;
        Ok((p.mean_abs(), p.warnings().to_vec()))
    }

    /// Signed `E b(Y)`.
    pub fn mean_b(&self) -> Estimate {
        Estimate::from_samples(&self.b)
    }

    pub fn max_abs_t(&self) -> f64 {
        self.t.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Right-hand sides of the two Stein bounds with their Monte Carlo errors.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub functional: String,
    pub model: String,
    pub term1_unconditional: Estimate,
    pub term1_conditional: Option<Estimate>,
    /// `|E b(Y)|`
    pub term2: Estimate,
    pub constants: NormConstants,
    pub bound: f64,
    pub bound_conditional: Option<f64>,
    pub max_pointwise_residual: f64,
    pub method: InnerMethod,
    pub samples: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl BoundReport {
    fn assemble(
        f: &GaussianFunctional,
        model: &DiffusionModel,
        mc: &McConfig,
        s: &TermSamples,
        constants: NormConstants,
        conditional: Option<(Estimate, Vec<String>)>,
    ) -> Self {
        let term1 = s.term1_unconditional();
        let term2 = s.mean_b().abs();
        let cg = constants.c1;
        let cgp = constants.c_g_prime();
        let (term1_conditional, warnings) = match conditional {
            Some((e, w)) => (Some(e), w),
            None => (None, Vec::new()),
        };
        Self {
            functional: f.label().to_string(),
            model: model.density().label(),
            term1_unconditional: term1,
            term1_conditional,
            term2,
            bound: cgp * term1.value + cg * term2.value,
            bound_conditional: term1_conditional.map(|e| cgp * e.value + cg * term2.value),
            constants,
            max_pointwise_residual: s.max_abs_t(),
            method: s.method,
            samples: mc.samples,
            seed: mc.seed,
            warnings,
        }
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("functional", self.functional.clone());
        r.push("model", self.model.clone());
        r.push("method", self.method.to_string());
        r.push("samples", self.samples.to_string());
        r.push("seed", self.seed.to_string());
        self.term1_unconditional
            .push_into(&mut r, "term1_unconditional");
        if let Some(c) = self.term1_conditional {
            c.push_into(&mut r, "term1_conditional");
        }
        self.term2.push_into(&mut r, "term2");
        r.push_num("max_pointwise_residual", self.max_pointwise_residual);
        r.push("class", self.constants.class.to_string());
        r.push_num("c_g", self.constants.c1);
        r.push_num("c_g_prime", self.constants.c_g_prime());
        r.push_num("bound", self.bound);
        if let Some(b) = self.bound_conditional {
            r.push_num("bound_conditional", b);
        }
        for (i, w) in self.warnings.iter().enumerate() {
            r.push(format!("warning_{i}"), w.clone());
        }
        r
    }
}

/// Norm constants for the class requested in `mc`, or the natural one.
pub fn constants_for(model: &DiffusionModel, mc: &McConfig) -> Result<NormConstants> {
    let class = match mc.class {
        Some(c) => c,
        None if model.validate().inf_a > 0.0 => FunctionClass::Kolmogorov,
        None => FunctionClass::Lipschitz,
    };
    estimate_norm_constants(model, class)
}

/// `C_g' E|½a(Y) + <D(-L)^{-1}(b(Y) - Eb(Y)), DY>| + C_g |E b(Y)|`.
pub fn bound_unconditional(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
) -> Result<BoundReport> {
    let constants = constants_for(model, mc)?;
    bound_unconditional_with(f, model, mc, constants)
}

pub fn bound_unconditional_with(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
    constants: NormConstants,
) -> Result<BoundReport> {
    let s = sample_terms(f, model, mc)?;
    Ok(BoundReport::assemble(f, model, mc, &s, constants, None))
}

/// Bound report from samples drawn earlier with the same `mc`.
pub fn bound_from_samples(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
    s: &TermSamples,
    constants: NormConstants,
    conditional: bool,
) -> Result<BoundReport> {
    let cond = if conditional {
        Some(s.term1_conditional(mc.bins)?)
    } else {
        None
    };
    Ok(BoundReport::assemble(f, model, mc, s, constants, cond))
}

/// Both bounds; the conditional one replaces `t` by `E[t | Y]`.
pub fn bound_conditional(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
) -> Result<BoundReport> {
    let constants = constants_for(model, mc)?;
    bound_conditional_with(f, model, mc, constants)
}

pub fn bound_conditional_with(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
    constants: NormConstants,
) -> Result<BoundReport> {
    let s = sample_terms(f, model, mc)?;
    let cond = s.term1_conditional(mc.bins)?;
    Ok(BoundReport::assemble(
        f,
        model,
        mc,
        &s,
        constants,
        Some(cond),
    ))
}

/// Residuals of the characterization: `E b(Y)` and `E|E[t | Y]|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Characterization {
    pub eb: Estimate,
    pub conditional: Estimate,
}

impl Characterization {
    /// Both residuals within `k` stderrs of zero, with `floor` absorbing
    /// round-off when a residual is exactly zero.
    pub fn consistent(&self, k: f64, floor: f64) -> bool {
        self.eb.value.abs() <= k * self.eb.stderr + floor
            && self.conditional.value <= k * self.conditional.stderr + floor
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        self.eb.push_into(&mut r, "eb_residual");
        self.conditional.push_into(&mut r, "conditional_residual");
        r
    }
}

pub fn characterization_check(
    f: &GaussianFunctional,
    model: &DiffusionModel,
    mc: &McConfig,
) -> Result<Characterization> {
    Characterization::from_samples(&sample_terms(f, model, mc)?, mc.bins)
}

impl Characterization {
    pub fn from_samples(s: &TermSamples, bins: usize) -> Result<Self> {
        Ok(Self {
            eb: s.mean_b(),
            conditional: s.term1_conditional(bins)?.0,
        })
    }
}

/// One side of a distance computation.
#[derive(Debug, Clone, Copy)]
pub enum Law<'a> {
    Sample(&'a [f64]),
    Density(&'a TargetDensity),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub kolmogorov: f64,
    pub wasserstein1: f64,
    pub total_variation: Option<f64>,
}

impl Distances {
    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push_num("kolmogorov", self.kolmogorov);
        r.push_num("wasserstein1", self.wasserstein1);
        r.push(
            "total_variation",
            self.total_variation.map_or("n/a".to_string(), fmt_num),
        );
        r
    }
}

/// Kolmogorov, Wasserstein-1 and (for two densities) total-variation
/// distances.
pub fn reference_distances(a: Law, b: Law, total_variation: bool) -> Result<Distances> {
    match (a, b) {
        (Law::Density(p), Law::Density(q)) => {
            let (k, w) = (ks_densities(p, q), w1_densities(p, q)?);
            let tv = if total_variation {
                Some(tv_densities(p, q)?)
            } else {
                None
            };
            Ok(Distances {
                kolmogorov: k,
                wasserstein1: w,
                total_variation: tv,
            })
        }
        _ if total_variation => Err(Error::UnsupportedMode(
            "total variation needs two densities, not samples".into(),
        )),
        (Law::Sample(s), Law::Density(d)) | (Law::Density(d), Law::Sample(s)) => {
            let s = sorted(s)?;
            Ok(Distances {
                kolmogorov: ks_statistic(&s, d),
                wasserstein1: w1_sample_density(&s, d)?,
                total_variation: None,
            })
        }
        (Law::Sample(s), Law::Sample(t)) => {
            let (s, t) = (sorted(s)?, sorted(t)?);
            let (k, w) = two_sample(&s, &t);
            Ok(Distances {
                kolmogorov: k,
                wasserstein1: w,
                total_variation: None,
            })
        }
    }
}

fn sorted(s: &[f64]) -> Result<Vec<f64>> {
    if s.is_empty() || s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be non-empty and finite".into()));
    }
    let mut v = s.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample Kolmogorov–Smirnov statistic of sorted data against `d`.
pub fn ks_statistic(sorted: &[f64], d: &TargetDensity) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = d.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn two_sample(s: &[f64], t: &[f64]) -> (f64, f64) {
    let (n, m) = (s.len() as f64, t.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut ks, mut w1) = (0.0f64, 0.0);
    let mut prev = s[0].min(t[0]);
    while i < s.len() || j < t.len() {
        let x = match (s.get(i), t.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        w1 += (i as f64 / n - j as f64 / m).abs() * (x - prev);
        while i < s.len() && s[i] == x {
            i += 1;
        }
        while j < t.len() && t[j] == x {
            j += 1;
        }
        ks = ks.max((i as f64 / n - j as f64 / m).abs());
        prev = x;
    }
    (ks, w1)
}

/// `∫|F_n - F|` for sorted data: exact tails through partial moments, a
/// split at the crossing point inside each gap, and Gauss–Legendre pieces.
fn w1_sample_density(sorted: &[f64], d: &TargetDensity) -> Result<f64> {
    let n = sorted.len();
    let gl = GaussLegendre::new(8);
    let (x1, xn) = (sorted[0], sorted[n - 1]);
    let support = d.support();
    let lower_tail = if support.contains(x1) {
        x1 * d.cdf(x1) - d.partial_first_moment(x1)?
    } else {
        0.0
    };
    let upper_tail = if support.contains(xn) {
        d.upper_first_moment(xn)? - xn * d.sf(xn)
    } else {
        0.0
    };
    let gaps: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map(|k| {
            let (u, v) = (sorted[k], sorted[k + 1]);
            if v <= u {
                return 0.0;
            }
            let c = (k + 1) as f64 / n as f64;
            let gap = |x: f64| (c - d.cdf(x)).abs();
            let q = d.quantile(c);
            if q > u && q < v {
                gl.integrate(gap, u, q) + gl.integrate(gap, q, v)
            } else {
                gl.integrate(gap, u, v)
            }
        })
        .collect();
    Ok(lower_tail.abs() + gaps.iter().sum::<f64>() + upper_tail.abs())
}

fn cdf_gap(p: &TargetDensity, q: &TargetDensity, x: f64) -> f64 {
    // upper tails through survival functions to keep relative accuracy
    if x > p.median() && x > q.median() {
        (q.sf(x) - p.sf(x)).abs()
    } else {
        (p.cdf(x) - q.cdf(x)).abs()
    }
}

fn breakpoints(p: &TargetDensity, q: &TargetDensity) -> Vec<f64> {
    let mut pts: Vec<f64> = p.quantile_grid(64, 1e-12);
    pts.extend(q.quantile_grid(64, 1e-12));
    for d in [p, q] {
        let s = d.support();
        pts.extend([s.lower(), s.upper()].into_iter().filter(|v| v.is_finite()));
        pts.push(d.median());
    }
    pts.retain(|v| v.is_finite());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn ks_densities(p: &TargetDensity, q: &TargetDensity) -> f64 {
    let mut pts: Vec<f64> = p.quantile_grid(2048, 1e-12);
    pts.extend(q.quantile_grid(2048, 1e-12));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let vals: Vec<f64> = pts.iter().map(|&x| cdf_gap(p, q, x)).collect();
    let (k, _) =
        vals.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |b, (i, v)| if *v > b.1 { (i, *v) } else { b },
        );
    // golden-section refinement between the neighbours of the grid maximum
    let (mut lo, mut hi) = (pts[k.saturating_sub(1)], pts[(k + 1).min(pts.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = vals[k];
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (fc, fd) = (cdf_gap(p, q, c), cdf_gap(p, q, d));
        best = best.max(fc).max(fd);
        if fc > fd {
            hi = d;
        } else {
            lo = c;
        }
    }
    best
}

fn integrate_pieces(pts: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    let q = Quadrature::default();
    pts.windows(2).map(|w| q.integrate(&f, w[0], w[1])).sum()
}

fn w1_densities(p: &TargetDensity, q: &TargetDensity) -> Result<f64> {
    integrate_pieces(&breakpoints(p, q), |x| cdf_gap(p, q, x))
}

fn tv_densities(p: &TargetDensity, q: &TargetDensity) -> Result<f64> {
    Ok(0.5 * integrate_pieces(&breakpoints(p, q), |x| (p.pdf(x) - q.pdf(x)).abs())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sample_distances() {
        let s = [0.0, 1.0, 2.0, 3.0];
        let t = [0.5, 1.5, 2.5, 3.5];
        let (k, w) = two_sample(&s, &t);
        assert!((k - 0.25).abs() < 1e-15);
        assert!((w - 0.5).abs() < 1e-15);
        assert_eq!(two_sample(&s, &s), (0.0, 0.0));
    }

    #[test]
    fn ks_of_perfect_grid() {
        let u = TargetDensity::uniform(0.0, 1.0).unwrap();
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&s, &u) - 0.005).abs() < 1e-12);
        assert!(w1_sample_density(&s, &u).unwrap() < 0.0026);
    }
}
