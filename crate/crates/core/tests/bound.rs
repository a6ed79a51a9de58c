use nalgebra::{DMatrix, DVector};
use stein_diffusion::bound::{
    bound_conditional, bound_unconditional, characterization_check, reference_distances,
    sample_terms, Law, McConfig,
};
use stein_diffusion::density::TargetDensity;
use stein_diffusion::diffusion::DiffusionModel;
use stein_diffusion::malliavin::{GaussianFunctional, HForm};
use stein_diffusion::stein::FunctionClass;
use stein_diffusion::Error;

fn model(d: TargetDensity) -> DiffusionModel {
    DiffusionModel::closed_form(&d).unwrap()
}

fn mc(samples: usize, seed: u64) -> McConfig {
    McConfig {
        samples,
        seed,
        ..Default::default()
    }
}

fn examples() -> Vec<(GaussianFunctional, TargetDensity)> {
    vec![
        (
            GaussianFunctional::chi_square(1).unwrap(),
            TargetDensity::chi_square(1.0).unwrap(),
        ),
        (
            GaussianFunctional::exp_neg_half_sum(2).unwrap(),
            TargetDensity::uniform(0.0, 1.0).unwrap(),
        ),
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
    ]
}

#[test]
fn identity_examples_have_zero_first_term() {
    for (f, d) in examples() {
        let r = bound_conditional(&f, &model(d), &mc(20_000, 1)).unwrap();
        assert!(
            r.term1_unconditional.value < 1e-9,
            "{}: {}",
            r.functional,
            r.term1_unconditional.value
        );
        assert!(r.term1_conditional.unwrap().value < 1e-9);
        assert!(r.term1_unconditional.value >= 0.0 && r.term2.value >= 0.0);
        assert!(r.bound.is_finite() && r.bound_conditional.unwrap().is_finite());
    }
}

#[test]
fn laplace_unconditional_fails_conditional_holds() {
    let m = model(TargetDensity::laplace(1.0).unwrap());
    for f in [
        GaussianFunctional::half_diff_squares(4).unwrap(),
        GaussianFunctional::product_pairs(4).unwrap(),
    ] {
        let r = bound_conditional(&f, &m, &mc(100_000, 2)).unwrap();
        let (u, c) = (r.term1_unconditional, r.term1_conditional.unwrap());
        assert!(u.value > 10.0 * u.stderr, "{u:?}");
        assert!(c.value < 0.05, "{c:?}");
        assert!(c.value <= u.value + 3.0 * (u.stderr + c.stderr));
        assert_eq!(r.constants.class, FunctionClass::Kolmogorov);
        assert!(r.bound_conditional.unwrap() < r.bound);
    }
}

#[test]
fn characterization_of_own_targets() {
    for (f, d) in examples() {
        let c = characterization_check(&f, &model(d), &mc(20_000, 3)).unwrap();
        assert!(c.consistent(3.0, 1e-9), "{}: {c:?}", f.label());
    }
    let c = characterization_check(
        &GaussianFunctional::product_pairs(4).unwrap(),
        &model(TargetDensity::laplace(1.0).unwrap()),
        &mc(100_000, 3),
    )
    .unwrap();
    assert!(c.eb.value.abs() < 3.0 * c.eb.stderr);
    assert!(c.conditional.value < 3.0 * c.conditional.stderr, "{c:?}");
}

#[test]
fn wrong_target_is_detected() {
    let f = GaussianFunctional::exp_neg_half_sum(2).unwrap();
    let c = characterization_check(
        &f,
        &model(TargetDensity::beta(0.5, 1.0).unwrap()),
        &mc(20_000, 4),
    )
    .unwrap();
    assert!(c.eb.value.abs() > 10.0 * c.eb.stderr);
    // closed-form gap: E b(Y) = -(1/2 - 1/3)
    assert!((c.eb.value + 1.0 / 6.0).abs() < 4.0 * c.eb.stderr);
}

#[test]
fn constant_functional() {
    let u = model(TargetDensity::uniform(0.0, 1.0).unwrap());
    let f = GaussianFunctional::custom("const", 1, |_| 0.5, None).unwrap();
    let cfg = McConfig {
        inner_samples: 1,
        ..mc(10_000, 5)
    };
    let c = characterization_check(&f, &u, &cfg).unwrap();
    assert_eq!(c.eb.value, 0.0);
    assert!((c.conditional.value - 0.5 * u.a(0.5)).abs() < 1e-15);
}

#[test]
fn normal_case_reduces_to_one_minus_product() {
    let f = GaussianFunctional::new(
        "x",
        DMatrix::identity(1, 1),
        HForm::Quadratic {
            q: DMatrix::zeros(1, 1),
            g: DVector::from_element(1, 1.0),
            c: 0.0,
        },
    )
    .unwrap();
    let r =
        bound_unconditional(&f, &model(TargetDensity::standard_normal()), &mc(10_000, 6)).unwrap();
    assert!(r.term1_unconditional.value < 1e-12);
}

#[test]
fn support_and_class_errors() {
    let f = GaussianFunctional::chi_square(1).unwrap();
    let err = sample_terms(
        &f,
        &model(TargetDensity::uniform(0.0, 1.0).unwrap()),
        &mc(1000, 7),
    )
    .unwrap_err();
    assert!(matches!(err, Error::SupportViolation { .. }));
    let cfg = McConfig {
        class: Some(FunctionClass::Kolmogorov),
        ..mc(1000, 7)
    };
    let err =
        bound_unconditional(&f, &model(TargetDensity::chi_square(1.0).unwrap()), &cfg).unwrap_err();
    assert!(err.to_string().contains("C4"));
}

#[test]
fn bounds_dominate_sample_kolmogorov_distance() {
    // the sample KS statistic carries its own noise: 1.36/√n at the 95% level
    for (f, d) in examples() {
        let n = 20_000;
        let m = model(d.clone());
        let r = bound_conditional(&f, &m, &mc(n, 8)).unwrap();
        let s = sample_terms(&f, &m, &mc(n, 8)).unwrap();
        let ks = reference_distances(Law::Sample(&s.y), Law::Density(&d), false)
            .unwrap()
            .kolmogorov;
        let cg = r.constants.c1;
        let cgp = r.constants.c_g_prime();
        let total = cgp * (r.term1_unconditional.stderr + r.term1_conditional.unwrap().stderr)
            + cg * r.term2.stderr;
        let noise = 1.36 / (n as f64).sqrt();
        assert!(
            ks <= r.bound_conditional.unwrap() + 3.0 * total + noise,
            "{}: ks {ks} vs {}",
            f.label(),
            r.bound_conditional.unwrap()
        );
    }
}

#[test]
fn reference_distance_examples() {
    let n0 = TargetDensity::standard_normal();
    let n1 = TargetDensity::normal(0.1, 1.0).unwrap();
    let same = reference_distances(Law::Density(&n0), Law::Density(&n0), true).unwrap();
    assert_eq!(
        (same.kolmogorov, same.wasserstein1, same.total_variation),
        (0.0, 0.0, Some(0.0))
    );

    let d = reference_distances(Law::Density(&n0), Law::Density(&n1), true).unwrap();
    let want = n0.cdf(0.05) - n0.cdf(-0.05);
    assert!(
        (d.kolmogorov - want).abs() < 1e-12,
        "{} vs {want}",
        d.kolmogorov
    );
    assert!((d.wasserstein1 - 0.1).abs() < 1e-8);
    // TV between unit-variance normals: 2Φ(δ/2) - 1
    assert!((d.total_variation.unwrap() - want).abs() < 1e-8);

    let u0 = TargetDensity::uniform(0.0, 1.0).unwrap();
    let u1 = TargetDensity::uniform(0.1, 1.1).unwrap();
    let d = reference_distances(Law::Density(&u0), Law::Density(&u1), false).unwrap();
    assert!((d.wasserstein1 - 0.1).abs() < 1e-8);
    assert!((d.kolmogorov - 0.1).abs() < 1e-12);

    let s = [0.2, 0.4, 0.6];
    assert!(matches!(
        reference_distances(Law::Sample(&s), Law::Density(&u0), true),
        Err(Error::UnsupportedMode(_))
    ));
    let d = reference_distances(Law::Sample(&s), Law::Sample(&s), false).unwrap();
    assert_eq!((d.kolmogorov, d.wasserstein1), (0.0, 0.0));
    // W1 between the three-point sample and U(0,1) by quantile coupling
    let d = reference_distances(Law::Sample(&s), Law::Density(&u0), false).unwrap();
    let coupled: f64 = [
        (0.0, 1.0 / 3.0, 0.2),
        (1.0 / 3.0, 2.0 / 3.0, 0.4),
        (2.0 / 3.0, 1.0, 0.6),
    ]
    .iter()
    .map(|&(a, b, x): &(f64, f64, f64)| {
        // antiderivative of |x - t|
        let g = |t: f64| {
            if t <= x {
                x * t - 0.5 * t * t
            } else {
                0.5 * x * x + 0.5 * (t - x) * (t - x)
            }
        };
        g(b) - g(a)
    })
    .sum();
    assert!(
        (d.wasserstein1 - coupled).abs() < 1e-12,
        "{} vs {coupled}",
        d.wasserstein1
    );
}
