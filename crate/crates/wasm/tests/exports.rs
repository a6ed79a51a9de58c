use serde_json::Value;
use stein_diffusion_wasm::{coefficients, simulate, stein_solution};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).expect("valid JSON")
}

fn floats(v: &Value, key: &str) -> Vec<f64> {
    v[key]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn uniform_coefficients_are_closed_form() {
    let v = parse(coefficients("uniform", vec![], 101));
    assert_eq!(v["kind"], "closed-form");
    assert_eq!(v["valid"], true);
    let (x, a) = (floats(&v, "x"), floats(&v, "a"));
    assert_eq!(x.len(), 101);
    for (x, a) in x.iter().zip(&a) {
        assert!((a - x * (1.0 - x)).abs() < 1e-12, "a({x}) = {a}");
    }
}

#[test]
fn stein_ramp_residual_is_small() {
    let v = parse(stein_solution("uniform", vec![], "ramp", f64::NAN, 200));
    assert!(v["residual"].as_f64().unwrap() < 1e-6, "{v}");
    assert!((v["m_f"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(floats(&v, "g").len(), 200);
    let b = parse(stein_solution("beta", vec![2.0, 3.0], "bump", 0.3, 50));
    assert!(b["residual"].as_f64().unwrap() < 1e-6, "{b}");
}

#[test]
fn simulation_tracks_target() {
    let v = parse(simulate("normal", vec![], 1000.0, 1e-2, 5, 100));
    let ks = v["ks"].as_f64().unwrap();
    assert!(ks < 0.1, "ks {ks}");
    let (e, t) = (floats(&v, "empirical"), floats(&v, "target"));
    assert_eq!(e.len(), t.len());
    assert!(e.windows(2).all(|w| w[0] <= w[1]));
    // deterministic in the seed
    assert_eq!(
        simulate("normal", vec![], 200.0, 1e-2, 5, 10),
        simulate("normal", vec![], 200.0, 1e-2, 5, 10)
    );
}

#[test]
fn errors_are_json() {
    for s in [
        coefficients("cauchy", vec![], 10),
        stein_solution("uniform", vec![], "spike", 0.5, 10),
        simulate("uniform", vec![], 1.0, 10.0, 0, 10),
    ] {
        assert!(parse(s)["error"].is_string());
    }
}
