use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use stein_diffusion::bound::{
    bound_from_samples, bound_unconditional, constants_for, sample_terms, Characterization,
    McConfig,
};
use stein_diffusion::density::{FamilyTag, TargetDensity};
use stein_diffusion::diffusion::DiffusionModel;
use stein_diffusion::experiments::{
    lognormal_rate_experiment, run_worked_example, WorkedExample, DEFAULT_RATE_N,
};
use stein_diffusion::io::{fmt_num, write_csv, KeyValueReport};
use stein_diffusion::malliavin::{GaussianFunctional, Route, MIN_PAIRS};
use stein_diffusion::sde::{
    invariant_check, simulate_path, BoundaryPolicy, Scheme, SimConfig, MIN_CHECK_HORIZON,
};
use stein_diffusion::stein::{ramp_width, solve, test_library, TestFunction};
use stein_diffusion::{Error, Result};

use crate::config::Settings;
use crate::{Command, DensityArgs, FunctionalArgs, McArgs, Outcome};

pub fn run(
    command: Command,
    config: Option<&Path>,
    threads: Option<usize>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let mut s = Settings::load(config)?;
    let name = match &command {
        Command::Density(_) => "density",
        Command::Build(_) => "build",
        Command::Stein(_) => "stein",
        Command::Bound(_) => "bound",
        Command::Simulate(_) => "simulate",
        Command::Verify(_) => "verify",
        Command::Rate(_) => "rate",
    };
    s.set("run", "command", name.to_string());
    if let Some(n) = s.opt(threads, "run", "threads")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let (report, outcome) = match command {
        Command::Density(c) => {
            let seed = s.seed(c.seed.seed)?;
            let d = density(&mut s, &c.density, None)?;
            let points = s.get(c.points, "density", "points", 200)?;
            (density_cmd(&d, points, out)?, Outcome::Passed).with_seed(seed)
        }
        Command::Build(c) => {
            let seed = s.seed(c.seed.seed)?;
            let d = density(&mut s, &c.density, None)?;
            let m = model(&mut s, &c.density, &d, "numeric")?;
            (build_cmd(&m, out)?, Outcome::Passed).with_seed(seed)
        }
        Command::Stein(c) => {
            let seed = s.seed(c.seed.seed)?;
            let d = density(&mut s, &c.density, None)?;
            let m = model(&mut s, &c.density, &d, "numeric")?;
            let f = s.get(c.f, "stein", "f", "ramp".to_string())?;
            let at = s.opt(c.at, "stein", "at")?;
            (stein_cmd(&m, &f, at, out)?, Outcome::Passed).with_seed(seed)
        }
        Command::Bound(c) => {
            let seed = s.seed(c.seed.seed)?;
            let mc = mc_config(&mut s, &c.mc, seed, 100_000)?;
            let (f, target) = functional(&mut s, &c.functional)?;
            let d = density(&mut s, &c.density, target)?;
            let m = model(&mut s, &c.density, &d, "closed-form")?;
            (bound_cmd(&f, &m, &mc, out)?, Outcome::Passed).with_seed(seed)
        }
        Command::Simulate(c) => {
            let seed = s.seed(c.seed.seed)?;
            let d = density(&mut s, &c.density, None)?;
            let m = model(&mut s, &c.density, &d, "closed-form")?;
            let defaults = SimConfig::default();
            let cfg = SimConfig {
                dt: s.get(c.dt, "sim", "dt", defaults.dt)?,
                horizon: s.get(c.horizon, "sim", "horizon", defaults.horizon)?,
                x0: s.opt(c.x0, "sim", "x0")?,
                scheme: parse::<Scheme>(s.get(
                    c.scheme,
                    "sim",
                    "scheme",
                    defaults.scheme.to_string(),
                )?)?,
                boundary: parse::<BoundaryPolicy>(s.get(
                    c.boundary,
                    "sim",
                    "boundary",
                    defaults.boundary.to_string(),
                )?)?,
                seed,
                ..defaults
            };
            let stride = s.get(c.stride, "sim", "stride", 100)?;
            (simulate_cmd(&m, cfg, stride, out)?, Outcome::Passed).with_seed(seed)
        }
        Command::Verify(c) => {
            let seed = s.seed(c.seed.seed)?;
            let mc = mc_config(&mut s, &c.mc, seed, 100_000)?;
            let which = s.get(c.example, "functional", "example", "all".to_string())?;
            verify_cmd(&which, &mc, out)?.with_seed(seed)
        }
        Command::Rate(c) => {
            let seed = s.seed(c.seed.seed)?;
            let mc = mc_config(&mut s, &c.mc, seed, 100_000)?;
            let ns = s
                .list(c.n, "rate", "n")?
                .unwrap_or_else(|| DEFAULT_RATE_N.to_vec());
            s.set(
                "rate",
                "n",
                ns.iter()
                    .map(|n| n.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            let loglog = match c.loglog {
                Some(p) => Some(p),
                None => out.map(|o| o.with_extension("dat")),
            };
            (rate_cmd(&ns, &mc, out, loglog.as_deref())?, Outcome::Passed).with_seed(seed)
        }
    };
    print!("{}", s.render(&report));
    Ok(outcome)
}

trait WithSeed {
    fn with_seed(self, seed: u64) -> (KeyValueReport, Outcome);
}

impl WithSeed for (KeyValueReport, Outcome) {
    fn with_seed(mut self, seed: u64) -> (KeyValueReport, Outcome) {
        if self.0.get("seed").is_none() {
            self.0.push("seed", seed.to_string());
        }
        self
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: String) -> Result<T> {
    s.parse()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Density from flags or config; `fallback` supplies one when neither names
/// a density.
fn density(
    s: &mut Settings,
    a: &DensityArgs,
    fallback: Option<TargetDensity>,
) -> Result<TargetDensity> {
    let csv = s.opt(
        a.density_csv.as_ref().map(|p| p.display().to_string()),
        "density",
        "csv",
    )?;
    let family = s.opt(a.family.clone(), "density", "family")?;
    let params = s.list(a.params.clone(), "density", "params")?;
    match (csv, family) {
        (Some(_), Some(_)) => Err(Error::Config(
            "give either --family or --density-csv, not both".into(),
        )),
        (Some(path), None) => TargetDensity::from_csv_path(path),
        (None, Some(name)) => {
            let tag: FamilyTag = name.parse()?;
            let params = match (params, name.as_str()) {
                (Some(p), _) => p,
                // chi-square with one degree of freedom
                (None, "chi_square" | "chi-square" | "chisquare") => vec![0.5, 0.5],
                (None, _) => Vec::new(),
            };
            TargetDensity::make_family(tag, &params)
        }
        (None, None) => fallback
            .ok_or_else(|| Error::Config("no density given; use --family or --density-csv".into())),
    }
}

fn model(
    s: &mut Settings,
    a: &DensityArgs,
    d: &TargetDensity,
    default: &str,
) -> Result<DiffusionModel> {
    let route = s.get(
        a.coefficients.clone(),
        "density",
        "coefficients",
        default.to_string(),
    )?;
    match route.as_str() {
        "numeric" => DiffusionModel::build_default(d),
        "closed-form" => match DiffusionModel::closed_form(d) {
            Err(Error::Unsupported(_)) => {
                s.set("density", "coefficients", "numeric".into());
                DiffusionModel::build_default(d)
            }
            r => r,
        },
        other => Err(Error::Config(format!(
            "unknown coefficient route '{other}'; expected numeric or closed-form"
        ))),
    }
}

fn mc_config(s: &mut Settings, a: &McArgs, seed: u64, samples: usize) -> Result<McConfig> {
    let defaults = McConfig::default();
    Ok(McConfig {
        samples: s.get(a.samples, "mc", "samples", samples)?,
        inner_samples: s.get(
            a.inner_samples,
            "mc",
            "inner_samples",
            defaults.inner_samples,
        )?,
        quad_nodes: s.get(a.quad_nodes, "mc", "quad_nodes", defaults.quad_nodes)?,
        route: parse::<Route>(s.get(
            a.route.clone(),
            "mc",
            "route",
            defaults.route.to_string(),
        )?)?,
        bins: s.get(a.bins, "mc", "bins", defaults.bins)?,
        seed,
        class: None,
    })
}

/// `"identity"` or rows separated by `;`, entries by `,`.
fn covariance(text: &str, n: usize) -> Result<DMatrix<f64>> {
    if text == "identity" {
        return Ok(DMatrix::identity(n, n));
    }
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(stein_diffusion::io::parse_list)
        .collect::<Result<_>>()?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("covariance must be {n} x {n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn functional(
    s: &mut Settings,
    a: &FunctionalArgs,
) -> Result<(GaussianFunctional, Option<TargetDensity>)> {
    let example = s.opt(a.example.clone(), "functional", "example")?;
    let name = s.opt(a.functional.clone(), "functional", "name")?;
    let dim = s.opt(a.dim, "functional", "dim")?;
    let (f, target) = match (example, name) {
        (_, Some(name)) => (GaussianFunctional::registered(&name, dim)?, None),
        (Some(e), None) => {
            let e: WorkedExample = e.parse()?;
            (e.functionals().remove(0), Some(e.target()))
        }
        (None, None) => return Err(Error::Config("give --example or --functional".into())),
    };
    let f = match s.opt(None::<String>, "functional", "covariance")? {
        Some(c) => {
            let k = covariance(&c, f.dim())?;
            f.with_covariance(k)?
        }
        None => f,
    };
    Ok((f, target))
}

fn density_cmd(d: &TargetDensity, points: usize, out: Option<&Path>) -> Result<KeyValueReport> {
    let mut r = KeyValueReport::new();
    r.push("label", d.label());
    r.push("family", d.tag().to_string());
    r.push_num("lower", d.support().lower());
    r.push_num("upper", d.support().upper());
    r.push_num("mean", d.mean());
    r.push_num("variance", d.variance());
    r.push_num("median", d.median());
    for p in [0.01, 0.25, 0.75, 0.99] {
        r.push_num(format!("quantile_{p}"), d.quantile(p));
    }
    if let Some(path) = out {
        let grid = d.quantile_grid(points.max(2), 1e-6);
        write_csv(
            create(path)?,
            &["x", "pdf", "cdf"],
            grid.iter().map(|&x| vec![x, d.pdf(x), d.cdf(x)]),
        )?;
        r.push("table", path.display().to_string());
    }
    Ok(r)
}

fn build_cmd(m: &DiffusionModel, out: Option<&Path>) -> Result<KeyValueReport> {
    let mut r = m.validate().to_report();
    if let Some(path) = out {
        m.write_csv(create(path)?)?;
        r.push("table", path.display().to_string());
    }
    Ok(r)
}

fn stein_cmd(
    m: &DiffusionModel,
    which: &str,
    at: Option<f64>,
    out: Option<&Path>,
) -> Result<KeyValueReport> {
    let d = m.density();
    let centre = at.unwrap_or_else(|| d.median());
    let fs = match which {
        "ramp" => vec![TestFunction::smoothed_indicator(centre, ramp_width(d))],
        "bump" => vec![TestFunction::bump(
            centre,
            0.5 * (d.quantile(0.75) - d.quantile(0.25)),
            1.0,
        )],
        "library" => test_library(d),
        other => {
            return Err(Error::Config(format!(
                "unknown test function '{other}'; expected ramp, bump or library"
            )))
        }
    };
    let mut r = KeyValueReport::new();
    let mut worst = 0.0f64;
    for f in &fs {
        let sol = solve(f, m)?;
        let res = sol.residual();
        worst = worst.max(res);
        if fs.len() == 1 {
            r.push("f", f.label().to_string());
            r.push_num("m_f", sol.m_f());
            let n = sol.norms();
            r.push_num("sup_g", n.g);
            r.push_num("sup_a_g_prime", n.a_g_prime);
            r.push_num("sup_g_prime", n.g_prime);
            r.push_num("representation_gap", sol.representation_gap());
            if let Some(path) = out {
                sol.write_csv(create(path)?)?;
                r.push("table", path.display().to_string());
            }
        }
    }
    r.push_num("residual", worst);
    r.push_bool("residual_below_1e-6", worst < 1e-6);
    let c = constants_for(m, &McConfig::default())?;
    r.extend_prefixed("constants", &c.to_report());
    Ok(r)
}

fn bound_cmd(
    f: &GaussianFunctional,
    m: &DiffusionModel,
    mc: &McConfig,
    out: Option<&Path>,
) -> Result<KeyValueReport> {
    let mut r = if mc.samples >= MIN_PAIRS {
        let constants = constants_for(m, mc)?;
        let samples = sample_terms(f, m, mc)?;
        let mut r = bound_from_samples(f, m, mc, &samples, constants, true)?.to_report();
        r.extend_prefixed(
            "characterization",
            &Characterization::from_samples(&samples, mc.bins)?.to_report(),
        );
        r
    } else {
        let mut r = bound_unconditional(f, m, mc)?.to_report();
        r.push(
            "note",
            format!("conditional term needs at least {MIN_PAIRS} samples"),
        );
        r
    };
    if let Some(path) = out {
        std::fs::write(path, r.to_text())?;
        r.push("report", path.display().to_string());
    }
    Ok(r)
}

fn simulate_cmd(
    m: &DiffusionModel,
    cfg: SimConfig,
    stride: usize,
    out: Option<&Path>,
) -> Result<KeyValueReport> {
    let mut r = KeyValueReport::new();
    r.push("model", m.density().label());
    if cfg.horizon >= MIN_CHECK_HORIZON {
        r.extend_prefixed("occupation", &invariant_check(m, &cfg)?.to_report());
    } else {
        r.push(
            "note",
            format!("invariant check needs horizon >= {MIN_CHECK_HORIZON}"),
        );
    }
    if let Some(path) = out {
        let p = simulate_path(
            m,
            &SimConfig {
                path_stride: Some(stride.max(1)),
                ..cfg
            },
        )?;
        p.write_path_csv(create(path)?)?;
        r.push("steps", p.steps.to_string());
        r.push_num("final_state", p.final_state);
        r.push("path", path.display().to_string());
    }
    Ok(r)
}

fn verify_cmd(which: &str, mc: &McConfig, out: Option<&Path>) -> Result<(KeyValueReport, Outcome)> {
    let examples = if which == "all" {
        WorkedExample::ALL.to_vec()
    } else {
        vec![which.parse()?]
    };
    let mut r = KeyValueReport::new();
    let mut all = true;
    for e in examples {
        let rep = run_worked_example(e, mc)?;
        all &= rep.passed();
        r.extend_prefixed(e.name(), &rep.to_report());
    }
    r.push_bool("all_passed", all);
    if let Some(path) = out {
        std::fs::write(path, r.to_text())?;
    }
    Ok((
        r,
        if all {
            Outcome::Passed
        } else {
            Outcome::ChecksFailed
        },
    ))
}

fn rate_cmd(
    ns: &[usize],
    mc: &McConfig,
    out: Option<&Path>,
    loglog: Option<&Path>,
) -> Result<KeyValueReport> {
    let t = lognormal_rate_experiment(ns, mc)?;
    let mut r = t.to_report();
    for row in &t.rows {
        r.push(
            format!("row.{}", row.n),
            format!(
                "term1={} term2={} bound={} stderr={}",
                fmt_num(row.term1),
                fmt_num(row.term2),
                fmt_num(row.bound),
                fmt_num(row.stderr)
            ),
        );
    }
    if let Some(path) = out {
        t.write_csv(create(path)?)?;
        r.push("table", path.display().to_string());
    }
    if let Some(path) = loglog {
        t.write_loglog(create(path)?)?;
        r.push("loglog", path.display().to_string());
    }
    Ok(r)
}
