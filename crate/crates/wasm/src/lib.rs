//! Browser bindings. Every export takes plain numbers and strings and returns
//! a JSON string; failures come back as `{"error": "..."}`.

use serde_json::{json, Value};
use stein_diffusion::density::{FamilyTag, TargetDensity};
use stein_diffusion::diffusion::DiffusionModel;
use stein_diffusion::sde::{invariant_check, SimConfig};
use stein_diffusion::stein::{ramp_width, solve, TestFunction};
use stein_diffusion::Result;
use wasm_bindgen::prelude::*;

/// Largest number of points any table may have.
const MAX_POINTS: usize = 2000;
/// Longest simulation the page may request.
const MAX_HORIZON: f64 = 5e3;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn model(family: &str, params: &[f64]) -> Result<DiffusionModel> {
    let tag: FamilyTag = family.parse()?;
    let d = TargetDensity::make_family(tag, params)?;
    match DiffusionModel::closed_form(&d) {
        Ok(m) => Ok(m),
        Err(_) => DiffusionModel::build_default(&d),
    }
}

fn thin(xs: &[f64], n: usize) -> Vec<usize> {
    if xs.len() <= n {
        return (0..xs.len()).collect();
    }
    (0..n).map(|i| i * (xs.len() - 1) / (n - 1)).collect()
}

/// Density, drift and diffusion coefficient on a quantile grid.
#[wasm_bindgen]
pub fn coefficients(family: &str, params: Vec<f64>, points: usize) -> String {
    respond((|| {
        let m = model(family, &params)?;
        let d = m.density();
        let xs = d.quantile_grid(points.clamp(2, MAX_POINTS), 1e-4);
        let v = m.validate();
        Ok(json!({
            "label": d.label(),
            "kind": m.kind().to_string(),
            "x": xs,
            "p": xs.iter().map(|&x| d.pdf(x)).collect::<Vec<_>>(),
            "a": xs.iter().map(|&x| m.a(x)).collect::<Vec<_>>(),
            "b": xs.iter().map(|&x| m.b(x)).collect::<Vec<_>>(),
            "valid": v.passed(),
        }))
    })())
}

/// Stein solution for a ramp (`"ramp"`) or bump (`"bump"`) test function
/// centred at `centre`; NaN centres on the median.
#[wasm_bindgen]
pub fn stein_solution(
    family: &str,
    params: Vec<f64>,
    test: &str,
    centre: f64,
    points: usize,
) -> String {
    respond((|| {
        let m = model(family, &params)?;
        let d = m.density();
        let z = if centre.is_nan() { d.median() } else { centre };
        let f = match test {
            "ramp" => TestFunction::smoothed_indicator(z, ramp_width(d)),
            "bump" => TestFunction::bump(z, 0.5 * (d.quantile(0.75) - d.quantile(0.25)), 1.0),
            other => {
                return Err(stein_diffusion::Error::Config(format!(
                    "unknown test function '{other}'"
                )))
            }
        };
        let s = solve(&f, &m)?;
        let idx = thin(s.grid(), points.clamp(2, MAX_POINTS));
        let norms = s.norms();
        Ok(json!({
            "f": f.label(),
            "m_f": s.m_f(),
            "residual": s.residual(),
            "sup_g": norms.g,
            "sup_g_prime": norms.g_prime,
            "x": idx.iter().map(|&i| s.grid()[i]).collect::<Vec<_>>(),
            "g": idx.iter().map(|&i| s.g_values()[i]).collect::<Vec<_>>(),
            "g_prime": idx.iter().map(|&i| s.g_prime_values()[i]).collect::<Vec<_>>(),
            "f_values": idx.iter().map(|&i| f.eval(s.grid()[i])).collect::<Vec<_>>(),
        }))
    })())
}

/// Simulates the diffusion and compares its occupation measure with the
/// target: empirical against exact cdf plus the KS distance.
#[wasm_bindgen]
pub fn simulate(
    family: &str,
    params: Vec<f64>,
    horizon: f64,
    dt: f64,
    seed: u64,
    points: usize,
) -> String {
    respond((|| {
        let m = model(family, &params)?;
        let cfg = SimConfig {
            horizon: horizon.min(MAX_HORIZON),
            dt,
            seed,
            ..SimConfig::default()
        };
        let o = invariant_check(&m, &cfg)?;
        let xs: Vec<f64> = o.empirical_cdf.iter().map(|p| p.0).collect();
        let idx = thin(&xs, points.clamp(2, MAX_POINTS));
        let d = m.density();
        Ok(json!({
            "samples": o.samples,
            "ks": o.ks_vs_target,
            "ks_baseline": o.ks_baseline,
            "mean": o.mean,
            "target_mean": d.mean(),
            "effective_stderr": o.effective_stderr,
            "x": idx.iter().map(|&i| xs[i]).collect::<Vec<_>>(),
            "empirical": idx.iter().map(|&i| o.empirical_cdf[i].1).collect::<Vec<_>>(),
            "target": idx.iter().map(|&i| d.cdf(xs[i])).collect::<Vec<_>>(),
        }))
    })())
}
