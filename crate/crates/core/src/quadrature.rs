//! Deterministic cubature over the unit ball and star-shaped neighbourhoods of
//! the origin.
//!
//! Every rule is a product of a direction rule on the sphere `S^{d-1}` and a
//! Gauss–Legendre rule along each ray, so integrands that are smooth inside a
//! star-shaped support but kinked on its boundary are still integrated with
//! spectral accuracy: the boundary is always a node-free endpoint of a
//! radial segment. Refinement doubles every node count until two successive
//! estimates agree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{CompensatedSum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: achieved error {achieved:e} > tolerance {tolerance:e} after {levels} refinements")]
    NotConverged {
        achieved: f64,
        tolerance: f64,
        levels: usize,
    },
    #[error("ball quadrature supports dimensions 1 to 3, got {0}")]
    UnsupportedDimension(usize),
}

/// Refinement controls for the adaptive drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    /// Successive estimates must agree to `tol * max(1, |value|)` per component.
    pub tol: f64,
    /// First level that is evaluated (level `k` uses `8·2^k` radial nodes).
    pub min_level: usize,
    pub max_level: usize,
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn for_scalar<T: Scalar>() -> Self {
        Self::with_tol(T::QUAD_TOL)
    }
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            min_level: 0,
            max_level: 5,
        }
    }
}

/// A converged vector of integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T, const K: usize> {
    pub values: [T; K],
    /// Largest absolute change between the last two levels.
    pub error: T,
    pub level: usize,
}

type NodeCache = Mutex<HashMap<usize, Arc<[(f64, f64)]>>>;

fn legendre_cache() -> &'static NodeCache {
    static CACHE: OnceLock<NodeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed once per order.
pub fn gauss_legendre(n: usize) -> Arc<[(f64, f64)]> {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    if let Some(rule) = legendre_cache().lock().unwrap().get(&n) {
        return rule.clone();
    }
    let mut rule = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        // exact zero for the middle node
        rule[n / 2].0 = 0.0;
    }
    let rule: Arc<[(f64, f64)]> = rule.into();
    legendre_cache().lock().unwrap().insert(n, rule.clone());
    rule
}

/// Directions on `S^{d-1}` with weights summing to the sphere's surface area.
fn sphere_rule(d: usize, level: usize) -> Result<Vec<(Vec<f64>, f64)>, QuadratureError> {
    let m = 16usize << level;
    match d {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            let w = 2.0 * std::f64::consts::PI / m as f64;
            Ok((0..m)
                .map(|k| {
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                    (vec![phi.cos(), phi.sin()], w)
                })
                .collect())
        }
        3 => {
            let zr = gauss_legendre(8 << level);
            let wphi = 2.0 * std::f64::consts::PI / m as f64;
            let mut out = Vec::with_capacity(zr.len() * m);
            for &(z, wz) in zr.iter() {
                let s = (1.0 - z * z).sqrt();
                for k in 0..m {
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                    out.push((vec![s * phi.cos(), s * phi.sin(), z], wz * wphi));
                }
            }
            Ok(out)
        }
        other => Err(QuadratureError::UnsupportedDimension(other)),
    }
}

/// A materialised cubature rule: flat node coordinates plus weights.
#[derive(Debug, Clone)]
pub struct StarRule<T> {
    dim: usize,
    points: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> StarRule<T> {
    /// Rule for the unit ball.
    pub fn unit_ball(d: usize, level: usize) -> Result<Self, QuadratureError> {
        Self::star(d, level, |_| T::one())
    }

    /// Rule for `{ r ω : 0 ≤ r ≤ radius(ω) }`.
    pub fn star<R>(d: usize, level: usize, radius: R) -> Result<Self, QuadratureError>
    where
        R: Fn(&[T]) -> T,
    {
        let dirs = sphere_rule(d, level)?;
        let radial = gauss_legendre(8 << level);
        let mut points = Vec::with_capacity(dirs.len() * radial.len() * d);
        let mut weights = Vec::with_capacity(dirs.len() * radial.len());
        let mut omega = vec![T::zero(); d];
        let half = T::c(0.5);
        for (dir, wdir) in &dirs {
            for (o, &v) in omega.iter_mut().zip(dir) {
                *o = T::c(v);
            }
            let rho = radius(&omega);
            for &(t, wt) in radial.iter() {
                let r = rho * half * (T::one() + T::c(t));
                for &o in &omega {
                    points.push(o * r);
                }
                weights.push(T::c(wdir * wt) * half * rho * r.powi(d as i32 - 1));
            }
        }
        Ok(Self {
            dim: d,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    /// Applies the rule to a vector-valued integrand, summing in node order.
    pub fn integrate<const K: usize, F>(&self, mut f: F) -> [T; K]
    where
        F: FnMut(&[T]) -> [T; K],
    {
        let mut acc = [CompensatedSum::<T>::new(); K];
        for (x, w) in self.nodes() {
            let v = f(x);
            for k in 0..K {
                acc[k].add(w * v[k]);
            }
        }
        acc.map(|a| a.value())
    }

    /// `∫∫ f(u, v) du dv` over `self × other`, parallel over the outer nodes
    /// but reduced in node order.
    pub fn integrate_pair<const K: usize, F>(&self, other: &Self, f: F) -> [T; K]
    where
        F: Fn(&[T], &[T]) -> [T; K] + Sync,
    {
        let rows: Vec<[T; K]> = self
            .points
            .par_chunks_exact(self.dim)
            .zip(self.weights.par_iter())
            .map(|(u, &wu)| {
                let inner = other.integrate(|v| f(u, v));
                inner.map(|s| s * wu)
            })
            .collect();
        let mut acc = [CompensatedSum::<T>::new(); K];
        for row in rows {
            for k in 0..K {
                acc[k].add(row[k]);
            }
        }
        acc.map(|a| a.value())
    }
}

/// Runs `eval(level)` for increasing levels until successive results agree.
pub fn refine<T, const K: usize, F>(opts: QuadOptions, eval: F) -> Result<QuadResult<T, K>, QuadratureError>
where
    T: Scalar,
    F: FnMut(usize) -> Result<[T; K], QuadratureError>,
{
    refine_each(opts, [opts.tol; K], eval)
}

/// As [`refine`], with a separate relative tolerance per component.
pub fn refine_each<T, const K: usize, F>(
    opts: QuadOptions,
    tols: [f64; K],
    mut eval: F,
) -> Result<QuadResult<T, K>, QuadratureError>
where
    T: Scalar,
    F: FnMut(usize) -> Result<[T; K], QuadratureError>,
{
    let mut prev = eval(opts.min_level)?;
    let mut last_err = T::infinity();
    let mut worst_tol = 0.0;
    for level in opts.min_level + 1..=opts.max_level {
        let cur = eval(level)?;
        let mut worst = T::zero();
        let mut ok = true;
        for k in 0..K {
            let diff = (cur[k] - prev[k]).abs();
            worst = worst.max(diff);
            if !(diff <= T::c(tols[k]) * cur[k].abs().max(T::one())) {
                ok = false;
                worst_tol = tols[k];
            }
        }
        last_err = worst;
        if ok {
            return Ok(QuadResult {
                values: cur,
                error: worst,
                level,
            });
        }
        prev = cur;
    }
    Err(QuadratureError::NotConverged {
        achieved: last_err.to_f64_(),
        tolerance: worst_tol,
        levels: opts.max_level - opts.min_level,
    })
}

/// Adaptive integral of `f` over the unit ball in `d ≤ 3` dimensions.
pub fn integrate_unit_ball<T, const K: usize, F>(
    d: usize,
    opts: QuadOptions,
    mut f: F,
) -> Result<QuadResult<T, K>, QuadratureError>
where
    T: Scalar,
    F: FnMut(&[T]) -> [T; K],
{
    refine(opts, |level| Ok(StarRule::unit_ball(d, level)?.integrate(&mut f)))
}

/// Adaptive integral over a star-shaped domain given by its radial function.
pub fn integrate_star<T, const K: usize, R, F>(
    d: usize,
    opts: QuadOptions,
    radius: R,
    mut f: F,
) -> Result<QuadResult<T, K>, QuadratureError>
where
    T: Scalar,
    R: Fn(&[T]) -> T,
    F: FnMut(&[T]) -> [T; K],
{
    refine(opts, |level| Ok(StarRule::star(d, level, &radius)?.integrate(&mut f)))
}

/// Adaptive one-dimensional integral over `[a, b]`.
pub fn integrate_interval<T, F>(a: T, b: T, opts: QuadOptions, f: F) -> Result<QuadResult<T, 1>, QuadratureError>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    let half = T::c(0.5);
    let mid = half * (a + b);
    let len = half * (b - a);
    refine(opts, |level| {
        let mut acc = CompensatedSum::new();
        for &(t, w) in gauss_legendre(8 << level).iter() {
            acc.add(T::c(w) * f(mid + len * T::c(t)));
        }
        Ok([acc.value() * len])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_sum_to_two_and_integrate_polynomials() {
        for n in [1, 2, 5, 8, 16, 64, 128] {
            let rule = gauss_legendre(n);
            let s: f64 = rule.iter().map(|p| p.1).sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            // exact up to degree 2n-1
            let deg = 2 * n - 2;
            let approx: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
            let exact = 2.0 / (deg as f64 + 1.0);
            assert!((approx - exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn unit_ball_volume_in_three_dimensions() {
        let pi = std::f64::consts::PI;
        for (d, vol) in [(1, 2.0), (2, pi), (3, 4.0 * pi / 3.0)] {
            let r = integrate_unit_ball::<f64, 1, _>(d, QuadOptions::default(), |_| [1.0]).unwrap();
            assert!((r.values[0] - vol).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn star_domain_area_of_a_disc_offset_radius() {
        // radius 1 + 0.3 cos φ; area = ∫ ρ²/2 dφ = π(1 + 0.045)
        let r = integrate_star::<f64, 1, _, _>(2, QuadOptions::default(), |w| 1.0 + 0.3 * w[0], |_| [1.0]).unwrap();
        let exact = std::f64::consts::PI * (1.0 + 0.09 / 2.0);
        assert!((r.values[0] - exact).abs() < 1e-12);
    }

    #[test]
    fn rejects_high_dimension() {
        assert_eq!(
            StarRule::<f64>::unit_ball(4, 0).unwrap_err(),
            QuadratureError::UnsupportedDimension(4)
        );
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions {
            tol: 1e-14,
            min_level: 0,
            max_level: 1,
        };
        // indicator of a half disc is discontinuous inside the rule's rays
        let err = integrate_unit_ball::<f64, 1, _>(2, opts, |x| [if x[0] > 0.1 { 1.0 } else { 0.0 }]).unwrap_err();
        assert!(matches!(err, QuadratureError::NotConverged { .. }));
    }

    #[test]
    fn pair_integral_factorises() {
        let rule = StarRule::<f64>::unit_ball(2, 1).unwrap();
        let [v] = rule.integrate_pair(&rule, |u, w| [u[0] * u[0] * w[1] * w[1]]);
        // (∫ x² over the disc)² = (π/4)²
        let exact = (std::f64::consts::PI / 4.0).powi(2);
        assert!((v - exact).abs() < 1e-13);
    }
}
