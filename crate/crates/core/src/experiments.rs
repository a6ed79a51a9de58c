//! Scripted reproductions: the worked identity examples and the
//! lognormal-product rate experiment.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use libm::erfc;
use rand::Rng;
use rayon::prelude::*;

use crate::bound::{
    bound_from_samples, constants_for, sample_terms, BoundReport, Characterization, McConfig,
};
use crate::density::TargetDensity;
use crate::diffusion::DiffusionModel;
use crate::io::{fmt_num, write_csv, KeyValueReport};
use crate::malliavin::{conditional_projection, GaussianFunctional, ProjectionConfig, Route};
use crate::mc::{substream, Estimate};
use crate::stein::NormConstants;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkedExample {
    ChiSquare,
    Uniform,
    Beta,
    Lognormal,
    Pareto,
    Laplace,
}

impl WorkedExample {
    pub const ALL: [WorkedExample; 6] = [
        WorkedExample::ChiSquare,
        WorkedExample::Uniform,
        WorkedExample::Beta,
        WorkedExample::Lognormal,
        WorkedExample::Pareto,
        WorkedExample::Laplace,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            WorkedExample::ChiSquare => "chi_square",
            WorkedExample::Uniform => "uniform",
            WorkedExample::Beta => "beta",
            WorkedExample::Lognormal => "lognormal",
            WorkedExample::Pareto => "pareto",
            WorkedExample::Laplace => "laplace",
        }
    }

    /// Target law of `Y`.
    pub fn target(&self) -> TargetDensity {
        match self {
            WorkedExample::ChiSquare => TargetDensity::chi_square(1.0),
            WorkedExample::Uniform => TargetDensity::uniform(0.0, 1.0),
            WorkedExample::Beta => TargetDensity::beta(0.5, 1.0),
            WorkedExample::Lognormal => TargetDensity::lognormal(0.0, 1.0),
            WorkedExample::Pareto => TargetDensity::pareto(2.0),
            WorkedExample::Laplace => TargetDensity::laplace(1.0),
        }
        .expect("fixed parameters are valid")
    }

    /// Functionals whose law is the target. Laplace has two.
    pub fn functionals(&self) -> Vec<GaussianFunctional> {
        match self {
            WorkedExample::ChiSquare => vec![GaussianFunctional::chi_square(1)],
            WorkedExample::Uniform => vec![GaussianFunctional::exp_neg_half_sum(2)],
            WorkedExample::Beta => vec![GaussianFunctional::exp_neg_sum(2)],
            WorkedExample::Lognormal => vec![GaussianFunctional::exp_single()],
            WorkedExample::Pareto => vec![GaussianFunctional::exp_quarter_sum_minus_one(2)],
            WorkedExample::Laplace => vec![
                GaussianFunctional::half_diff_squares(4),
                GaussianFunctional::product_pairs(4),
            ],
        }
        .into_iter()
        .map(|f| f.expect("registered forms are valid"))
        .collect()
    }

    /// Tolerance on the pointwise residual for the identity examples.
    pub fn pointwise_tolerance(&self) -> Option<f64> {
        match self {
            WorkedExample::ChiSquare => Some(1e-10),
            WorkedExample::Laplace => None,
            _ => Some(1e-9),
        }
    }
}

impl fmt::Display for WorkedExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkedExample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown example `{s}`; expected one of chi_square, uniform, beta, lognormal, pareto, laplace")))
    }
}

/// One named pass/fail with the measured values behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExampleRun {
    pub bound: BoundReport,
    pub characterization: Characterization,
    /// Largest gap between binned `E[S/2 | Y]` and `1 + |y|` (Laplace only).
    pub identity_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExampleReport {
    pub example: WorkedExample,
    pub runs: Vec<ExampleRun>,
    pub checks: Vec<Check>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("example", self.example.name());
        for (i, run) in self.runs.iter().enumerate() {
            let p = format!("run{i}");
            r.extend_prefixed(&p, &run.bound.to_report());
            r.extend_prefixed(&p, &run.characterization.to_report());
            if let Some(e) = run.identity_error {
                r.push_num(format!("{p}.identity_max_error"), e);
            }
        }
        for c in &self.checks {
            r.push(
                format!("check.{}", c.name),
                format!("{} ({})", if c.passed { "pass" } else { "FAIL" }, c.detail),
            );
        }
        r.push_bool("passed", self.passed());
        r
    }
}

/// Builds the example's functional(s) and model, runs both bounds and the
/// characterization check, and grades the outcome the example predicts.
///
/// Needs at least `MIN_PAIRS` samples for the conditional terms.
pub fn run_worked_example(example: WorkedExample, mc: &McConfig) -> Result<ExampleReport> {
    let target = example.target();
    let model = DiffusionModel::closed_form(&target)?;
    let constants = constants_for(&model, mc)?;
    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for f in example.functionals() {
        let s = sample_terms(&f, &model, mc)?;
        let bound = bound_from_samples(&f, &model, mc, &s, constants.clone(), true)?;
        let characterization = Characterization::from_samples(&s, mc.bins)?;
        let tag = f.label().to_string();
        let u = bound.term1_unconditional;
        let c = bound.term1_conditional.expect("conditional requested");

        let identity_error = match example.pointwise_tolerance() {
            Some(tol) => {
                let r = bound.max_pointwise_residual;
                checks.push(Check::new(
                    format!("{tag}.pointwise_identity"),
                    r < tol,
                    format!("max |t| = {} < {}", fmt_num(r), tol),
                ));
                checks.push(Check::new(
                    format!("{tag}.conditional_zero"),
                    c.value < tol,
                    format!("E|E[t|Y]| = {}", fmt_num(c.value)),
                ));
                None
            }
            None => {
                checks.push(Check::new(
                    format!("{tag}.unconditional_fails"),
                    u.value > 10.0 * u.stderr,
                    format!("E|t| = {} ± {}", fmt_num(u.value), fmt_num(u.stderr)),
                ));
                checks.push(Check::new(
                    format!("{tag}.conditional_holds"),
                    c.value < 0.05,
                    format!("E|E[t|Y]| = {} ± {}", fmt_num(c.value), fmt_num(c.stderr)),
                ));
                let e = laplace_identity_error(&f, mc)?;
                checks.push(Check::new(
                    format!("{tag}.conditional_identity"),
                    e < 0.05,
                    format!("max |E[S/2|Y] - (1+|y|)| = {}", fmt_num(e)),
                ));
                Some(e)
            }
        };
        checks.push(Check::new(
            format!("{tag}.characterization"),
            characterization.consistent(3.0, 1e-9),
            format!(
                "Eb = {} ± {}, E|E[t|Y]| = {} ± {}",
                fmt_num(characterization.eb.value),
                fmt_num(characterization.eb.stderr),
                fmt_num(characterization.conditional.value),
                fmt_num(characterization.conditional.stderr)
            ),
        ));
        runs.push(ExampleRun {
            bound,
            characterization,
            identity_error,
        });
    }
    Ok(ExampleReport {
        example,
        runs,
        checks,
    })
}

/// Largest gap between the binned regression of `S/2 = |N|²/2` on `Y` and
/// the binned mean of `1 + |Y|`, over bins inside the central 90% of the
/// Laplace(1) law.
pub fn laplace_identity_error(f: &GaussianFunctional, mc: &McConfig) -> Result<f64> {
    let rows: Vec<(f64, f64)> = (0..mc.samples)
        .into_par_iter()
        .map(|i| {
            let x = f.realization(mc.seed, i as u64);
            (f.eval(&x), 0.5 * x.iter().map(|v| v * v).sum::<f64>())
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let w: Vec<f64> = y.iter().map(|y| 1.0 + y.abs()).collect();
    let cfg = ProjectionConfig {
        bins: mc.bins,
        ..Default::default()
    };
    let pv = conditional_projection(&y, &v, cfg)?;
    let pw = conditional_projection(&y, &w, cfg)?;
    let law = TargetDensity::laplace(1.0)?;
    let (lo, hi) = (law.quantile(0.05), law.quantile(0.95));
    let err = pv
        .bins()
        .iter()
        .zip(pw.bins())
        .filter(|(b, _)| b.lo >= lo && b.hi <= hi)
        .map(|(b, c)| (b.mean_v - c.mean_v).abs())
        .fold(f64::NAN, f64::max);
    if err.is_nan() {
        return Err(Error::Config(
            "no bin lies inside the central 90% range; use more samples".into(),
        ));
    }
    Ok(err)
}

pub const DEFAULT_RATE_N: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];
pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const BOOTSTRAP_BATCHES: usize = 20;
pub const MIN_RATE_SAMPLES: usize = 100_000;

/// `E Y_N` for `Y_N = exp(-(1/√(2N)) Σ (W_i² - 1))`.
pub fn lognormal_product_mean(n: usize) -> f64 {
    let n = n as f64;
    let k = 1.0 / (2.0 * n).sqrt();
    ((n / 2.0).sqrt() - 0.5 * n * (1.0 + 2.0 * k).ln()).exp()
}

/// `½a(y)` for the lognormal(0,1) model written through `Z = -ln y`:
/// `e^{(Z-1)²/2} ∫_Z^{Z+1} e^{-x²/2} dx`.
pub fn half_a_lognormal_via_z(y: f64) -> f64 {
    let z = -y.ln();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // pick the tail where the two erfc terms do not cancel
    let window = if z + 0.5 >= 0.0 {
        0.5 * (erfc(z * s) - erfc((z + 1.0) * s))
    } else {
        0.5 * (erfc(-(z + 1.0) * s) - erfc(-z * s))
    };
    (0.5 * (z - 1.0) * (z - 1.0)).exp() * (2.0 * std::f64::consts::PI).sqrt() * window
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub term1: f64,
    pub term1_stderr: f64,
    /// `|E b(Y_N)|` from the closed-form mean.
    pub term2: f64,
    /// Monte Carlo `E Y_N` for cross-checking `term2`.
    pub mean_mc: Estimate,
    pub mean_exact: f64,
    pub bound: f64,
    pub stderr: f64,
    /// `√N · |E b(Y_N)|`.
    pub scaled_term2: f64,
    /// Largest relative gap between the two evaluations of `½a(Y_N)`.
    pub half_a_gap: f64,
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub excluded: Vec<usize>,
    pub fitted_slope: f64,
    pub slope_ci: (f64, f64),
    pub constants: NormConstants,
    pub seed: u64,
    pub samples: usize,
}

impl RateTable {
    pub fn row(&self, n: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// `√N|E b(Y_N)|` at `hi` divided by the same at `lo`.
    pub fn scaled_term2_ratio(&self, lo: usize, hi: usize) -> Option<f64> {
        Some(self.row(hi)?.scaled_term2 / self.row(lo)?.scaled_term2)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(
            out,
            &[
                "N",
                "term1",
                "term2",
                "bound",
                "stderr",
                "term1_stderr",
                "mean_exact",
                "mean_mc",
                "mean_mc_stderr",
                "sqrt_n_term2",
                "half_a_gap",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.n as f64,
                    r.term1,
                    r.term2,
                    r.bound,
                    r.stderr,
                    r.term1_stderr,
                    r.mean_exact,
                    r.mean_mc.value,
                    r.mean_mc.stderr,
                    r.scaled_term2,
                    r.half_a_gap,
                ]
            }),
        )
    }

    /// `ln N` and `ln bound`, two whitespace-separated columns.
    pub fn write_loglog<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# ln(N) ln(bound); fitted slope {} [{}, {}]",
            fmt_num(self.fitted_slope),
            fmt_num(self.slope_ci.0),
            fmt_num(self.slope_ci.1)
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{} {}",
                fmt_num((r.n as f64).ln()),
                fmt_num(r.bound.ln())
            )?;
        }
        Ok(())
    }

    pub fn to_report(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.push("samples", self.samples.to_string());
        r.push("seed", self.seed.to_string());
        r.push("class", self.constants.class.to_string());
        r.push_num("c_g", self.constants.c1);
        r.push_num("c_g_prime", self.constants.c_g_prime());
        r.push_num("fitted_slope", self.fitted_slope);
        r.push_num("slope_ci_lo", self.slope_ci.0);
        r.push_num("slope_ci_hi", self.slope_ci.1);
        if !self.excluded.is_empty() {
            r.push(
                "excluded_n",
                self.excluded
                    .iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        r
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

struct RawRow {
    row: RateRow,
    batch_means: Vec<f64>,
}

/// Measures the assembled bound `C_g' E|t| + C_g |E b(Y_N)|` for
/// `Y_N = exp(-(1/√(2N)) Σ (W_i² - 1))` against the lognormal(0,1) model
/// and fits its log-log slope in `N`.
pub fn lognormal_rate_experiment(ns: &[usize], mc: &McConfig) -> Result<RateTable> {
    if ns.len() < 5 {
        return Err(Error::Config(format!(
            "need at least 5 values of N, got {}",
            ns.len()
        )));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("N values must be strictly increasing".into()));
    }
    if let Some(&n) = ns.iter().find(|&&n| !(2..=1024).contains(&n)) {
        return Err(Error::Config(format!("N = {n} outside [2, 1024]")));
    }
    if mc.samples < MIN_RATE_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {MIN_RATE_SAMPLES} samples per N, got {}",
            mc.samples
        )));
    }
    let target = TargetDensity::lognormal(0.0, 1.0)?;
    let model = DiffusionModel::closed_form(&target)?;
    let constants = constants_for(&model, mc)?;
    let (cg, cgp) = (constants.c1, constants.c_g_prime());
    let m = target.mean();

    let raw: Vec<RawRow> = ns
        .iter()
        .map(|&n| {
            let f = GaussianFunctional::scaled_log_product(n)?;
            let s = sample_terms(
                &f,
                &model,
                &McConfig {
                    route: Route::ClosedForm,
                    ..*mc
                },
            )?;
            let abs_t: Vec<f64> = s.t.iter().map(|t| t.abs()).collect();
            let term1 = Estimate::from_samples(&abs_t);
            let mean_exact = lognormal_product_mean(n);
            let term2 = (m - mean_exact).abs();
            let half_a_gap =
                s.y.iter()
                    .map(|&y| {
                        let a = 0.5 * model.a(y);
                        (a - half_a_lognormal_via_z(y)).abs() / a
                    })
                    .fold(0.0, f64::max);
            let size = abs_t.len() / BOOTSTRAP_BATCHES;
            let batch_means = abs_t
                .chunks(size)
                .take(BOOTSTRAP_BATCHES)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            Ok(RawRow {
                row: RateRow {
                    n,
                    term1: term1.value,
                    term1_stderr: term1.stderr,
                    term2,
                    mean_mc: Estimate::from_samples(&s.y),
                    mean_exact,
                    bound: cgp * term1.value + cg * term2,
                    stderr: cgp * term1.stderr,
                    scaled_term2: (n as f64).sqrt() * term2,
                    half_a_gap,
                },
                batch_means,
            })
        })
        .collect::<Result<_>>()?;

    let (kept, dropped): (Vec<RawRow>, Vec<RawRow>) = raw
        .into_iter()
        .partition(|r| r.row.bound > 0.0 && r.row.bound.is_finite());
    if kept.len() < 2 {
        return Err(Error::Config(
            "fewer than two positive bounds; no slope to fit".into(),
        ));
    }
    let xs: Vec<f64> = kept.iter().map(|r| (r.row.n as f64).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.row.bound.ln()).collect();
    let fitted_slope = ls_slope(&xs, &ys);

    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            // streams past the sample indices keep the resampling independent
            let mut rng = substream(mc.seed, u64::MAX - b as u64);
            let ys: Vec<f64> = kept
                .iter()
                .map(|r| {
                    let k = r.batch_means.len();
                    let t1 = (0..k)
                        .map(|_| r.batch_means[rng.random_range(0..k)])
                        .sum::<f64>()
                        / k as f64;
                    (cgp * t1 + cg * r.row.term2).ln()
                })
                .collect();
            ls_slope(&xs, &ys)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let pick = |q: f64| slopes[((q * (slopes.len() - 1) as f64).round()) as usize];

    Ok(RateTable {
        rows: kept.into_iter().map(|r| r.row).collect(),
        excluded: dropped.iter().map(|r| r.row.n).collect(),
        fitted_slope,
        slope_ci: (pick(0.025), pick(0.975)),
        constants,
        seed: mc.seed,
        samples: mc.samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Quadrature;

    #[test]
    fn product_mean_matches_quadrature() {
        // E exp(-k(W² - 1)) = e^k / √(1 + 2k), raised to the N-th power
        for n in [2usize, 7, 64] {
            let k = 1.0 / (2.0 * n as f64).sqrt();
            let one = Quadrature::precise()
                .integrate(
                    |w| {
                        (-k * (w * w - 1.0)).exp() * (-0.5 * w * w).exp()
                            / (2.0 * std::f64::consts::PI).sqrt()
                    },
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                )
                .unwrap();
            let want = one.powi(n as i32);
            assert!(
                (lognormal_product_mean(n) - want).abs() < 1e-10 * want,
                "{n}"
            );
        }
    }

    #[test]
    fn half_a_forms_agree() {
        let model =
            DiffusionModel::closed_form(&TargetDensity::lognormal(0.0, 1.0).unwrap()).unwrap();
        for &y in &[1e-4, 0.03, 0.5, 1.0, 1.7, 9.0, 150.0] {
            let a = 0.5 * model.a(y);
            assert!((a - half_a_lognormal_via_z(y)).abs() < 1e-10 * a, "{y}");
        }
    }

    #[test]
    fn slope_of_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        assert!((ls_slope(&xs, &ys) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn example_names_round_trip() {
        for e in WorkedExample::ALL {
            assert_eq!(e.name().parse::<WorkedExample>().unwrap(), e);
        }
        assert!("gamma".parse::<WorkedExample>().is_err());
    }
}
