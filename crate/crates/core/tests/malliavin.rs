use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use stein_diffusion::density::TargetDensity;
use stein_diffusion::diffusion::DiffusionModel;
use stein_diffusion::malliavin::{
    aux_gaussian_integrals, conditional_projection, mehler_scalar_product, sample_gaussian_vector,
    GaussianFunctional, InnerMethod, MehlerConfig, MehlerEngine, ProjectionConfig, Route,
};
use stein_diffusion::mc::{substream, Estimate};

fn closed(nodes: usize) -> MehlerEngine {
    MehlerEngine::new(MehlerConfig {
        quad_nodes: nodes,
        route: Route::ClosedForm,
        ..Default::default()
    })
    .unwrap()
}

fn half_a(d: &TargetDensity) -> impl Fn(f64) -> f64 {
    let m = DiffusionModel::closed_form(d).unwrap();
    move |y| 0.5 * m.a(y)
}

#[test]
fn chi_square_scalar_product_is_twice_y() {
    let f = GaussianFunctional::chi_square(1).unwrap();
    let e = closed(64);
    for i in 0..100 {
        let x = f.realization(1, i);
        let sp = e.scalar_product(&f, &x, i).unwrap();
        assert_eq!(sp.method, InnerMethod::InnerClosedForm);
        assert_eq!(sp.stderr, 0.0);
        assert!((sp.value - 2.0 * f.eval(&x)).abs() < 1e-12);
    }
}

#[test]
fn uniform_scalar_product_closed_form() {
    let f = GaussianFunctional::exp_neg_half_sum(2).unwrap();
    let e = closed(64);
    for i in 0..100 {
        let x = f.realization(2, i);
        let s = x[0] * x[0] + x[1] * x[1];
        let want = 0.5 * ((-s / 2.0).exp() - (-s).exp());
        assert!((e.scalar_product(&f, &x, i).unwrap().value - want).abs() < 1e-10);
    }
}

#[test]
fn section_four_identities_hold_pointwise() {
    let cases = [
        (
            GaussianFunctional::exp_neg_sum(2).unwrap(),
            TargetDensity::beta(0.5, 1.0).unwrap(),
        ),
        (
            GaussianFunctional::exp_single().unwrap(),
            TargetDensity::lognormal(0.0, 1.0).unwrap(),
        ),
        (
            GaussianFunctional::exp_quarter_sum_minus_one(2).unwrap(),
            TargetDensity::pareto(2.0).unwrap(),
        ),
    ];
    let e = closed(64);
    for (f, d) in cases {
        let ha = half_a(&d);
        for i in 0..100 {
            let x = f.realization(3, i);
            let y = f.eval(&x);
            let sp = e.scalar_product(&f, &x, i).unwrap().value;
            assert!(
                (sp - ha(y)).abs() < 1e-9 * (1.0 + ha(y)),
                "{}: {sp} vs {}",
                f.label(),
                ha(y)
            );
        }
    }
    // Pareto: the product is also Y(1 + Y)
    let f = GaussianFunctional::exp_quarter_sum_minus_one(2).unwrap();
    let x = [0.3, -1.2];
    let y = f.eval(&x);
    assert!((e.scalar_product(&f, &x, 0).unwrap().value - y * (1.0 + y)).abs() < 1e-12);
}

#[test]
fn laplace_representations_give_half_sum() {
    let e = closed(64);
    for f in [
        GaussianFunctional::half_diff_squares(4).unwrap(),
        GaussianFunctional::product_pairs(4).unwrap(),
    ] {
        for i in 0..50 {
            let x = f.realization(4, i);
            let s: f64 = x.iter().map(|v| v * v).sum();
            assert!((e.scalar_product(&f, &x, i).unwrap().value - 0.5 * s).abs() < 1e-12);
        }
    }
}

#[test]
fn inner_mc_agrees_with_closed_form() {
    let fs = [
        GaussianFunctional::chi_square(1).unwrap(),
        GaussianFunctional::exp_neg_half_sum(2).unwrap(),
        GaussianFunctional::exp_neg_sum(2).unwrap(),
        GaussianFunctional::exp_single().unwrap(),
        GaussianFunctional::exp_quarter_sum_minus_one(2).unwrap(),
        GaussianFunctional::half_diff_squares(4).unwrap(),
        GaussianFunctional::product_pairs(4).unwrap(),
    ];
    let cf = closed(64);
    let mc = MehlerEngine::new(MehlerConfig {
        inner_samples: 10_000,
        route: Route::InnerMc,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    for f in &fs {
        for i in 0..100 {
            let x = f.realization(5, i);
            let want = cf.scalar_product(f, &x, i).unwrap().value;
            let got = mc.scalar_product(f, &x, i).unwrap();
            assert_eq!(got.method, InnerMethod::InnerMc);
            assert!(
                (got.value - want).abs() <= 4.0 * got.stderr + 1e-12,
                "{} #{i}: {} ± {} vs {want}",
                f.label(),
                got.value,
                got.stderr
            );
        }
    }
}

#[test]
fn quadrature_nodes_converge() {
    let fs = [
        GaussianFunctional::exp_neg_half_sum(2).unwrap(),
        GaussianFunctional::exp_neg_sum(2).unwrap(),
        GaussianFunctional::exp_single().unwrap(),
        GaussianFunctional::exp_quarter_sum_minus_one(2).unwrap(),
        GaussianFunctional::scaled_log_product(16).unwrap(),
    ];
    let (e32, e64) = (closed(32), closed(64));
    for f in &fs {
        for i in 0..50 {
            let x = f.realization(6, i);
            let a = e32.scalar_product(f, &x, 0).unwrap().value;
            let b = e64.scalar_product(f, &x, 0).unwrap().value;
            assert!((a - b).abs() < 1e-9, "{}: {a} vs {b}", f.label());
        }
    }
    assert!(MehlerEngine::new(MehlerConfig {
        quad_nodes: 8,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn finite_difference_gradients_match_analytic() {
    for name in stein_diffusion::malliavin::REGISTRY {
        let n = if *name == "scaled_log_product" {
            Some(8)
        } else {
            None
        };
        let f = GaussianFunctional::registered(name, n).unwrap();
        let (mut g, mut fd) = (vec![0.0; f.dim()], vec![0.0; f.dim()]);
        for i in 0..20 {
            let x = f.realization(7, i);
            f.gradient(&x, &mut g).unwrap();
            f.fd_gradient(&x, &mut fd);
            let scale = g.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * scale, "{name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn custom_functional_uses_inner_mc() {
    // h(x) = x³/3 + x has no closed form registered; E'[h'(ax + sN')] = 1 + a²x² + s²
    let f = GaussianFunctional::custom("cubic", 1, |x| x[0].powi(3) / 3.0 + x[0], None).unwrap();
    assert!(!f.closed_form_capable());
    let x = [0.7];
    let cfg = MehlerConfig {
        inner_samples: 20_000,
        seed: 3,
        ..Default::default()
    };
    let sp = mehler_scalar_product(&f, &x, cfg).unwrap();
    let hp = 1.0 + x[0] * x[0];
    // ∫_0^1 (1 + a²x² + 1 - a²) da = 2 + (x² - 1)/3
    let want = hp * (2.0 + (x[0] * x[0] - 1.0) / 3.0);
    assert!(
        (sp.value - want).abs() < 4.0 * sp.stderr,
        "{} ± {} vs {want}",
        sp.value,
        sp.stderr
    );
    let err = mehler_scalar_product(
        &f,
        &x,
        MehlerConfig {
            route: Route::ClosedForm,
            ..cfg
        },
    )
    .unwrap_err();
    assert!(err.to_string().contains("closed-form"));
}

#[test]
fn gaussian_sampling() {
    let id = DMatrix::identity(2, 2);
    let s = sample_gaussian_vector(&id, 1_000_000, 9).unwrap();
    let n = s.len() as f64;
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let c = s.iter().map(|v| v[i] * v[j]).sum::<f64>() / n;
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((c - want).abs() < 5e-3);
    }
    let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let s = sample_gaussian_vector(&k, 1_000_000, 9).unwrap();
    let corr = s.iter().map(|v| v[0] * v[1]).sum::<f64>() / n;
    assert!((corr - 0.5).abs() < 5e-3);
    assert_eq!(s[..100], sample_gaussian_vector(&k, 100, 9).unwrap()[..]);

    let s4 = sample_gaussian_vector(&DMatrix::identity(4, 4), 1_000_000, 10).unwrap();
    for i in 0..4 {
        let m = s4.iter().map(|v| v[i]).sum::<f64>() / n;
        assert!(m.abs() < 4.0 / 1000.0);
    }
}

#[test]
fn aux_integrals_against_monte_carlo() {
    let (kc, c, a) = (-0.25, 1.0, 0.5);
    let (m0, m1) = aux_gaussian_integrals(kc, c, a).unwrap();
    let s = (1.0f64 - a * a).sqrt();
    let mut rng = substream(12, 0);
    let draws: Vec<(f64, f64)> = (0..1_000_000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let y = c + s * z;
            let e = (-kc * y * y).exp();
            (e, y * e)
        })
        .collect();
    let e0 = Estimate::from_samples(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
    let e1 = Estimate::from_samples(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    assert!(e0.within(m0, 3.0), "{e0:?} vs {m0}");
    assert!(e1.within(m1, 3.0), "{e1:?} vs {m1}");
}

#[test]
fn projection_examples() {
    let mut rng = substream(13, 0);
    let n = 1_000_000;
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let v: Vec<f64> = y.iter().map(|t| t * t).collect();
    let p = conditional_projection(&y, &v, ProjectionConfig::default()).unwrap();
    let bins = p.bins();
    for b in &bins[1..bins.len() - 1] {
        let mid = 0.5 * (b.lo + b.hi);
        assert!((b.mean_v - mid * mid).abs() < 0.01);
    }

    let w: Vec<f64> = (0..n)
        .map(|_| 2.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let p = conditional_projection(&y, &w, ProjectionConfig::default()).unwrap();
    for b in p.bins() {
        assert!((b.mean_v - 2.0).abs() < 5.0 * b.stderr);
    }
}

#[test]
fn laplace_quartet_projection() {
    let f = GaussianFunctional::product_pairs(4).unwrap();
    let samples = sample_gaussian_vector(f.covariance(), 1_000_000, 14).unwrap();
    let y: Vec<f64> = samples.iter().map(|x| f.eval(x)).collect();
    let v: Vec<f64> = samples
        .iter()
        .map(|x| 0.5 * x.iter().map(|t| t * t).sum::<f64>())
        .collect();
    let p = conditional_projection(&y, &v, ProjectionConfig::default()).unwrap();
    let bins = p.bins();
    for b in &bins[4..bins.len() - 4] {
        assert!((b.mean_v - (1.0 + b.mean_y.abs())).abs() < 0.05, "{b:?}");
    }
}
