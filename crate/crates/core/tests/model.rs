use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infill_core::kernel::multi_indices;
use infill_core::model::{AbramsonWeight, IntensityFamily, IntensityModel, Polynomial, Window};

fn families(d: usize) -> Vec<IntensityModel<f64>> {
    let w = Window::new(vec![-1.0; d], vec![1.0; d]).unwrap();
    let mut terms = vec![(vec![0; d], 1.0)];
    for i in 0..d {
        let mut e = vec![0; d];
        e[i] = 1;
        terms.push((e.clone(), 0.7 - 0.4 * i as f64));
        e[i] = 2;
        terms.push((e.clone(), -0.3));
        e[i] = 3;
        terms.push((e, 0.1));
    }
    if d == 2 {
        terms.push((vec![1, 1], 0.25));
    }
    let exponent = Polynomial::from_terms(d, terms).unwrap();
    vec![
        IntensityModel::new(IntensityFamily::Constant { a: 7.0 }, w.clone()).unwrap(),
        IntensityModel::new(IntensityFamily::LogPolynomial { exponent }, w.clone()).unwrap(),
        IntensityModel::new(
            IntensityFamily::GaussianBump {
                a: 2.0,
                b: 9.0,
                center: vec![0.1; d],
                scale: 0.35,
            },
            w,
        )
        .unwrap(),
    ]
}

fn shifted(x: &[f64], i: usize, step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += step;
    y
}

/// Checks `f(β)` against the central difference of `f(β - e_i)` for every
/// multi-index of order 1 to `max_order`.
fn check_partials(x: &[f64], max_order: usize, f: impl Fn(&[usize], &[f64]) -> f64, scale: f64) {
    let step = 1e-4;
    for order in 1..=max_order {
        let tol = if order <= 3 { 1e-5 } else { 1e-3 };
        for mi in multi_indices(x.len(), order) {
            let i = mi.iter().position(|&e| e > 0).unwrap();
            let mut lower = mi.clone();
            lower[i] -= 1;
            let fd = (f(&lower, &shifted(x, i, step)) - f(&lower, &shifted(x, i, -step))) / (2.0 * step);
            let exact = f(&mi, x);
            let denom = exact.abs().max(1e-3 * scale);
            assert!((exact - fd).abs() / denom < tol, "{mi:?} at {x:?}: {exact} vs {fd}");
        }
    }
}

#[test]
fn intensity_partials_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in 1..=2 {
        for model in families(d) {
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.8..0.8)).collect();
                let scale = model.value(&x);
                check_partials(&x, 5, |mi, y| model.intensity_partial(mi, y).unwrap(), scale);
            }
        }
    }
}

#[test]
fn weight_partials_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for d in 1..=2 {
        for model in families(d).into_iter().skip(1) {
            let anchor = vec![0.05; d];
            let w = AbramsonWeight::new(model, anchor).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.8..0.8)).collect();
                check_partials(&x, 4, |mi, y| w.abramson_weight_partial(mi, y).unwrap(), 1.0);
            }
        }
    }
}

#[test]
fn weight_derivatives_at_anchor_match_intensity_ratios() {
    for model in families(1) {
        let x0 = [0.2];
        let l: Vec<f64> = (0..=4).map(|k| model.intensity_partial(&[k], &x0).unwrap()).collect();
        let w = AbramsonWeight::new(model, x0.to_vec()).unwrap();
        let c = |k: usize| w.abramson_weight_partial(&[k], &x0).unwrap();
        let (l0, l1, l2, l3, l4) = (l[0], l[1], l[2], l[3], l[4]);
        let expected = [
            l1 / (2.0 * l0),
            l2 / (2.0 * l0) - l1 * l1 / (4.0 * l0 * l0),
            l3 / (2.0 * l0) - 3.0 * l1 * l2 / (4.0 * l0 * l0) + 3.0 * l1.powi(3) / (8.0 * l0.powi(3)),
            l4 / (2.0 * l0) - (4.0 * l1 * l3 + 3.0 * l2 * l2) / (4.0 * l0 * l0) + 9.0 * l1 * l1 * l2 / (4.0 * l0.powi(3))
                - 15.0 * l1.powi(4) / (16.0 * l0.powi(4)),
        ];
        for (k, e) in expected.iter().enumerate() {
            assert_relative_eq!(c(k + 1), *e, epsilon = 1e-12, max_relative = 1e-10);
        }
    }
}

#[test]
fn constant_weight_partials_are_exactly_zero() {
    for d in 1..=3 {
        let w = Window::new(vec![0.0; d], vec![1.0; d]).unwrap();
        let model = IntensityModel::new(IntensityFamily::Constant { a: 3.0 }, w).unwrap();
        let weight = AbramsonWeight::new(model, vec![0.5; d]).unwrap();
        for order in 1..=4 {
            for mi in multi_indices(d, order) {
                assert_eq!(weight.abramson_weight_partial(&mi, &[0.3; 3][..d]).unwrap(), 0.0);
            }
        }
        assert_eq!(weight.value(&[0.9; 3][..d]), 1.0);
    }
}

#[test]
fn stored_bounds_enclose_the_intensity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 1..=2 {
        for model in families(d) {
            for _ in 0..2000 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.999..0.999)).collect();
                let v = model.value(&x);
                assert!(v >= model.lambda_min() && v <= model.lambda_max());
            }
        }
    }
}
