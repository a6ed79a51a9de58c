use stein_diffusion::density::{FamilyTag, TargetDensity};
use stein_diffusion::diffusion::{CoefficientKind, DiffusionModel, DriftSpec};
use stein_diffusion::numerics::Quadrature;

fn families() -> Vec<TargetDensity> {
    FamilyTag::BUILT_IN
        .iter()
        .map(|t| TargetDensity::make_family(*t, &[]).unwrap())
        .collect()
}

fn interior(d: &TargetDensity, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| d.quantile(0.005 + 0.99 * i as f64 / (n - 1) as f64))
        .collect()
}

#[test]
fn numeric_matches_closed_form_everywhere() {
    for d in families() {
        let num = DiffusionModel::build_default(&d).unwrap();
        let cf = DiffusionModel::closed_form(&d).unwrap();
        assert_eq!(num.kind(), CoefficientKind::Numeric);
        for x in interior(&d, 200) {
            let (an, ac) = (num.a(x), cf.a(x));
            assert!(
                (an - ac).abs() <= 1e-7 * ac,
                "{} at {x}: {an} vs {ac}",
                d.label()
            );
        }
    }
}

#[test]
fn pareto_numeric_against_quadrature_oracle() {
    let d = TargetDensity::pareto(2.0).unwrap();
    let m = DiffusionModel::build_default(&d).unwrap();
    let q = Quadrature::precise();
    for i in 0..50 {
        let x = d.quantile((i as f64 + 0.5) / 50.0);
        // oracle: direct quadrature of 2∫_0^x (1 - y) p(y) dy / p(x)
        let oracle = 2.0 * q.integrate(|y| (1.0 - y) * d.pdf(y), 0.0, x).unwrap() / d.pdf(x);
        assert!((m.a(x) - oracle).abs() <= 1e-7 * oracle);
        assert!((oracle - 2.0 * x * (1.0 + x)).abs() <= 1e-7 * oracle);
    }
}

#[test]
fn tabulated_density_gets_numeric_model() {
    let lap = TargetDensity::laplace(1.0).unwrap();
    let grid: Vec<f64> = (0..=2400).map(|i| -12.0 + i as f64 * 0.01).collect();
    let vals: Vec<f64> = grid.iter().map(|x| lap.pdf(*x)).collect();
    let t = TargetDensity::make_tabulated(grid, vals).unwrap();
    assert!(DiffusionModel::closed_form(&t).is_err());
    let m = DiffusionModel::build_default(&t).unwrap();
    let q = Quadrature::precise();
    for x in [-3.0, -1.0, 0.5, 2.0] {
        // same truncated support, exact Laplace shape
        let oracle = if x <= t.mean() {
            2.0 * q
                .integrate(|y| (t.mean() - y) * lap.pdf(y), -12.0, x)
                .unwrap()
                / lap.pdf(x)
        } else {
            2.0 * q
                .integrate(|y| (y - t.mean()) * lap.pdf(y), x, 12.0)
                .unwrap()
                / lap.pdf(x)
        };
        assert!(
            (m.a(x) - oracle).abs() < 1e-5 * oracle,
            "{x}: {} vs {oracle}",
            m.a(x)
        );
        assert!((m.a(x) - 2.0 * (1.0 + f64::abs(x))).abs() < 1e-3 * m.a(x));
    }
}

#[test]
fn round_trip_reconstruction() {
    for d in families() {
        let m = DiffusionModel::build_default(&d).unwrap();
        let c = d.median();
        let r = m.reconstruct_density(c, d.pdf(c)).unwrap();
        for x in interior(&d, 60) {
            let (got, want) = (r.eval(x).unwrap(), d.pdf(x));
            assert!(
                (got - want).abs() < 1e-6 * want,
                "{} at {x}: {got} vs {want}",
                d.label()
            );
        }
    }
}

#[test]
fn reconstruction_examples() {
    let n = DiffusionModel::closed_form(&TargetDensity::standard_normal()).unwrap();
    let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let r = n.reconstruct_density(0.0, phi0).unwrap();
    assert!((r.eval(1.0).unwrap() - phi0 * (-0.5f64).exp()).abs() < 1e-12);

    let u = DiffusionModel::closed_form(&TargetDensity::uniform(0.0, 1.0).unwrap()).unwrap();
    let r = u.reconstruct_density(0.5, 1.0).unwrap();
    for i in 0..=98 {
        let x = 0.01 + 0.01 * i as f64;
        assert!((r.eval(x).unwrap() - 1.0).abs() < 1e-6);
    }
    assert!(r.eval(1.5).is_err());
}

#[test]
fn flux_derivative_identity() {
    // (a p)' = 2 b p by central differences of the numeric representation
    for d in families() {
        let m = DiffusionModel::build_default(&d).unwrap();
        let scale = d.quantile(0.75) - d.quantile(0.25);
        for x in interior(&d, 40) {
            let h = 1e-4
                * scale
                    .min(x - d.support().lower())
                    .min(d.support().upper() - x);
            let ap = |y: f64| m.a(y) * d.pdf(y);
            let fd = (ap(x + h) - ap(x - h)) / (2.0 * h);
            let exact = 2.0 * m.b(x) * d.pdf(x);
            assert!(
                (fd - exact).abs() < 1e-5 * (1.0 + exact.abs()),
                "{} at {x}: {fd} vs {exact}",
                d.label()
            );
        }
    }
}

#[test]
fn validation_examples() {
    let u = DiffusionModel::closed_form(&TargetDensity::uniform(0.0, 1.0).unwrap())
        .unwrap()
        .validate();
    assert!((u.upper.liminf_estimate - 1.0).abs() < 1e-6);
    assert!((u.lower.liminf_estimate - 1.0).abs() < 1e-6);
    let n = DiffusionModel::closed_form(&TargetDensity::standard_normal())
        .unwrap()
        .validate();
    assert_eq!(n.inf_a, 2.0);
    let c = DiffusionModel::closed_form(&TargetDensity::chi_square(1.0).unwrap())
        .unwrap()
        .validate();
    assert!((c.lower.liminf_estimate - 4.0).abs() < 1e-9);
    assert!(c.lipschitz_route_ok());
    for d in families() {
        let v = DiffusionModel::build_default(&d).unwrap().validate();
        assert!(v.passed(), "{}", d.label());
        assert!(v.drift_monotone_at_ends());
    }
}

#[test]
fn lognormal_coefficient_ratio() {
    // a(x)/x stays above 2 from the median upward and decays slowly toward 0
    let m = DiffusionModel::closed_form(&TargetDensity::lognormal(0.0, 1.0).unwrap()).unwrap();
    for x in [1.0, 2.0, 10.0, 100.0] {
        assert!(m.a(x) / x >= 2.0, "{x}: {}", m.a(x) / x);
    }
    let small: Vec<f64> = [1e-1, 1e-2, 1e-4, 1e-8]
        .iter()
        .map(|&x| m.a(x) / x)
        .collect();
    assert!(small.windows(2).all(|w| w[1] < w[0]));
    assert!(small[3] < 2.0);
}

#[test]
fn custom_drift_must_change_sign_once() {
    let d = TargetDensity::standard_normal();
    let bad = DriftSpec::custom(|x| x, 0.0);
    assert!(DiffusionModel::build_numeric(&d, bad).is_err());
}

#[test]
fn model_csv_has_grid_rows() {
    let m = DiffusionModel::closed_form(&TargetDensity::uniform(0.0, 1.0).unwrap()).unwrap();
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,a,b,p"));
    assert!(lines.count() >= 4096);
}
