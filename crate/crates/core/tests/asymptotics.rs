use approx::assert_relative_eq;

use infill_core::asymptotics::{
    a_integral, a_integral_closed_1d, a_integral_closed_2d, bias_leading_fixed, expansion_integral, h_star_adaptive,
    h_star_fixed, h_star_fixed_from_values, h_star_fixed_planar, var_leading,
};
use infill_core::kernel::KernelSpec;
use infill_core::model::{IntensityFamily, IntensityModel, Polynomial, Window};
use infill_core::quadrature::QuadOptions;

fn log_poly(d: usize, terms: Vec<(Vec<usize>, f64)>) -> IntensityModel<f64> {
    let w = Window::new(vec![-1.0; d], vec![1.0; d]).unwrap();
    let exponent = Polynomial::from_terms(d, terms).unwrap();
    IntensityModel::new(IntensityFamily::LogPolynomial { exponent }, w).unwrap()
}

fn bump(d: usize) -> IntensityModel<f64> {
    let w = Window::new(vec![-1.0; d], vec![1.0; d]).unwrap();
    let family = IntensityFamily::GaussianBump {
        a: 20.0,
        b: 60.0,
        center: vec![0.15; d],
        scale: 0.4,
    };
    IntensityModel::new(family, w).unwrap()
}

fn models(d: usize) -> Vec<IntensityModel<f64>> {
    if d == 1 {
        vec![
            log_poly(1, vec![(vec![0], 4.0), (vec![1], 0.8)]),
            log_poly(1, vec![(vec![0], 4.0), (vec![1], 0.5), (vec![2], -0.7), (vec![3], 0.3)]),
            bump(1),
        ]
    } else {
        vec![
            log_poly(2, vec![(vec![0, 0], 4.0), (vec![1, 0], 0.8), (vec![0, 1], 0.4)]),
            log_poly(
                2,
                vec![(vec![0, 0], 4.0), (vec![1, 0], 0.5), (vec![1, 1], -0.6), (vec![0, 2], 0.4), (vec![0, 3], 0.2)],
            ),
            bump(2),
        ]
    }
}

fn quad() -> QuadOptions {
    QuadOptions {
        tol: 1e-12,
        max_level: 6,
        ..QuadOptions::default()
    }
}

#[test]
fn fixed_h_star_scales_as_n_to_minus_one_over_d_plus_4() {
    for d in 1..=2 {
        let model = &models(d)[1];
        let kernel = KernelSpec::new(d, 1.0).unwrap();
        let x0 = vec![0.1; d];
        let scaled: Vec<f64> = [10, 1000, 100_000, 10_000_000]
            .iter()
            .map(|&n| h_star_fixed(model, &kernel, &x0, n).unwrap().h_star.unwrap() * (n as f64).powf(1.0 / (d as f64 + 4.0)))
            .collect();
        for s in &scaled {
            assert_relative_eq!(*s, scaled[0], max_relative = 1e-12);
        }
    }
}

#[test]
fn adaptive_h_star_scales_as_n_to_minus_one_over_d_plus_8() {
    for d in 1..=2 {
        let model = &models(d)[0];
        let kernel = KernelSpec::new(d, 6.0).unwrap();
        let x0 = vec![0.1; d];
        let base = h_star_adaptive(model, &kernel, &x0, 1, quad()).unwrap();
        assert_relative_eq!(base.rate_exponent, -1.0 / (d as f64 + 8.0), max_relative = 1e-15);
        let h1 = base.h_star.unwrap();
        for n in [10, 1000, 100_000] {
            let h = h_star_adaptive(model, &kernel, &x0, n, quad()).unwrap().h_star.unwrap();
            assert_relative_eq!(h * (n as f64).powf(1.0 / (d as f64 + 8.0)), h1, max_relative = 1e-12);
        }
    }
}

#[test]
fn planar_h_star_matches_general_formula() {
    for gamma in [0.0, 1.0, 2.0, 5.0] {
        let kernel = KernelSpec::new(2, gamma).unwrap();
        for (lambda, lap, n) in [(100.0, 3.0, 1000), (7.5, -0.4, 50), (1e4, 250.0, 1_000_000)] {
            let general = h_star_fixed_from_values(&kernel, lambda, lap, n).h_star.unwrap();
            let planar = h_star_fixed_planar(gamma, lambda, lap, n).h_star.unwrap();
            assert_relative_eq!(general, planar, max_relative = 1e-12);
        }
    }
}

#[test]
fn zero_laplacian_is_degenerate() {
    let kernel = KernelSpec::new(2, 1.0).unwrap();
    let r = h_star_fixed_from_values(&kernel, 100.0, 0.0, 1000);
    assert!(r.degenerate && r.h_star.is_none());
    let constant = IntensityModel::new(IntensityFamily::Constant { a: 5.0 }, Window::unit(2)).unwrap();
    let k6 = KernelSpec::new(2, 6.0).unwrap();
    assert!(h_star_adaptive(&constant, &k6, &[0.5, 0.5], 100, quad()).unwrap().degenerate);
}

#[test]
fn fourth_moment_is_three_times_second_cross_moment() {
    for d in 2..=3 {
        for gamma in [0.0, 1.0, 2.5, 6.0] {
            let m = KernelSpec::new(d, gamma).unwrap().moments();
            assert_relative_eq!(m.v4 / m.v2().unwrap(), 3.0, max_relative = 1e-13);
        }
    }
}

#[test]
fn leading_terms_scale_exactly() {
    let model = &models(2)[0];
    let kernel = KernelSpec::new(2, 1.0).unwrap();
    let x0 = [0.2, -0.1];
    let v1 = var_leading(model, &kernel, &x0, 100, 0.05).unwrap();
    let v2 = var_leading(model, &kernel, &x0, 200, 0.05).unwrap();
    assert_eq!(v1, 2.0 * v2);
    let b1 = bias_leading_fixed(model, &kernel, &x0, 0.05).unwrap();
    let b2 = bias_leading_fixed(model, &kernel, &x0, 0.1).unwrap();
    assert_relative_eq!(b2, 4.0 * b1, max_relative = 1e-15);
}

#[test]
fn low_order_expansion_coefficients_vanish() {
    for d in 1..=2 {
        let kernel = KernelSpec::new(d, 6.0).unwrap();
        for model in models(d) {
            let x0 = vec![0.1; d];
            for order in 1..=3 {
                let v = expansion_integral(&model, &kernel, &x0, order, quad()).unwrap();
                assert!(v.abs() < 1e-6, "order {order}: {v}");
            }
            let a4 = expansion_integral(&model, &kernel, &x0, 4, quad()).unwrap();
            let a = a_integral(&model, &kernel, &x0, quad()).unwrap();
            assert_relative_eq!(a4, a, max_relative = 1e-9, epsilon = 1e-12);
        }
    }
}

#[test]
fn closed_forms_match_quadrature() {
    for gamma in [6.0, 8.0] {
        for d in 1..=2 {
            let kernel = KernelSpec::new(d, gamma).unwrap();
            for model in models(d) {
                for x0 in [vec![0.1; d], vec![-0.3; d]] {
                    let quad_value = a_integral(&model, &kernel, &x0, quad()).unwrap();
                    let closed = if d == 1 {
                        a_integral_closed_1d(&model, &x0, gamma).unwrap()
                    } else {
                        a_integral_closed_2d(&model, &x0, gamma).unwrap()
                    };
                    assert_relative_eq!(quad_value, closed, max_relative = 1e-8, epsilon = 1e-12);
                }
            }
        }
    }
}

#[test]
fn log_linear_closed_form_is_beta_to_the_fourth() {
    let beta = 0.8;
    let model = log_poly(1, vec![(vec![0], 2.0), (vec![1], beta)]);
    for gamma in [6.0, 7.5] {
        let v4 = KernelSpec::new(1, gamma).unwrap().moments().v4;
        let closed = a_integral_closed_1d(&model, &[0.2], gamma).unwrap();
        assert_relative_eq!(closed, v4 / 24.0 * beta.powi(4), max_relative = 1e-12);
    }
}

#[test]
fn adaptive_results_require_enough_smoothness() {
    let model = &models(1)[0];
    assert!(a_integral_closed_1d(model, &[0.0], 5.0).is_err());
    assert!(h_star_adaptive(model, &KernelSpec::new(1, 4.0).unwrap(), &[0.0], 10, quad()).is_err());
}
