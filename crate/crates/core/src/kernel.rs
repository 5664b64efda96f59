//! The Beta kernel family `κ^γ(x) = (1 - xᵀx)^γ / c(d, γ)` on the closed unit
//! ball, its analytic partial derivatives and moment constants.

use std::collections::HashMap;

use thiserror::Error;

use crate::quadrature::{integrate_unit_ball, QuadOptions, QuadratureError};
use crate::scalar::Scalar;
use crate::special::ball_power_integral;

/// Highest derivative order the kernel machinery expands.
pub const MAX_DERIVATIVE_ORDER: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel dimension must be at least 1")]
    ZeroDimension,
    #[error("kernel smoothness must be finite and non-negative, got {0}")]
    InvalidGamma(f64),
    #[error("derivative of order {order} requires gamma > {order}, kernel has gamma = {gamma}")]
    Smoothness { order: usize, gamma: f64 },
    #[error("derivative order {0} exceeds the supported maximum of 5")]
    OrderTooHigh(usize),
    #[error("multi-index has {got} entries for a {expected}-dimensional kernel")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mixed moment V2 is only defined for d >= 2")]
    MixedMomentUndefined,
    #[error("g_u derivative requires v > 0, got {0}")]
    NonPositiveScale(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Dimension and smoothness of a Beta kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    d: usize,
    gamma: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(d: usize, gamma: T) -> Result<Self, KernelError> {
        if d == 0 {
            return Err(KernelError::ZeroDimension);
        }
        if !gamma.is_finite() || gamma < T::zero() {
            return Err(KernelError::InvalidGamma(gamma.to_f64_()));
        }
        Ok(Self { d, gamma })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `c(d, γ)`.
    pub fn normalising_constant(&self) -> T {
        ball_power_integral(self.d, self.gamma)
    }

    /// Fails unless the kernel is `order` times continuously differentiable.
    pub fn check_smoothness(&self, order: usize) -> Result<(), KernelError> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(KernelError::OrderTooHigh(order));
        }
        if order > 0 && self.gamma <= T::from_usize_(order) {
            return Err(KernelError::Smoothness {
                order,
                gamma: self.gamma.to_f64_(),
            });
        }
        Ok(())
    }

    /// `κ^γ(x)`; zero outside the closed unit ball.
    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.d);
        let s = T::one() - x.iter().fold(T::zero(), |acc, &v| acc + v * v);
        if s < T::zero() {
            return T::zero();
        }
        s.powf(self.gamma) / self.normalising_constant()
    }

    /// Kernel bound to a cached normalising constant, for hot loops.
    pub fn evaluator(&self) -> KernelEval<T> {
        KernelEval {
            gamma: self.gamma,
            inv_c: self.normalising_constant().recip(),
            integer_gamma: integer_power(self.gamma),
        }
    }

    pub fn moments(&self) -> KernelMoments<T> {
        let d = T::from_usize_(self.d);
        let g = self.gamma;
        let two = T::c(2.0);
        let c = self.normalising_constant();
        let c2 = ball_power_integral(self.d, two * g);
        let a = d + two * g + two;
        let b = a + two;
        KernelMoments {
            d: self.d,
            c,
            q: c2 / (c * c),
            v: a.recip(),
            v4: T::c(3.0) / (a * b),
            v2: if self.d >= 2 { Some((a * b).recip()) } else { None },
        }
    }

    /// Analytic `∂^β κ^γ(x)` for a multi-index `β` with `|β| < γ`.
    pub fn partial(&self, multi_index: &[usize], x: &[T]) -> Result<T, KernelError> {
        Ok(self.partial_expansion(multi_index)?.eval(self, x))
    }

    /// Symbolic expansion of `∂^β κ^γ` reusable across evaluation points.
    pub fn partial_expansion(&self, multi_index: &[usize]) -> Result<PartialExpansion, KernelError> {
        if multi_index.len() != self.d {
            return Err(KernelError::DimensionMismatch {
                expected: self.d,
                got: multi_index.len(),
            });
        }
        let order: usize = multi_index.iter().sum();
        self.check_smoothness(order)?;
        Ok(PartialExpansion::new(multi_index))
    }

    /// All partials of order `≤ max_order`, expanded once.
    pub fn partials_table(&self, max_order: usize) -> Result<PartialsTable<T>, KernelError> {
        self.check_smoothness(max_order)?;
        let mut by_order = Vec::with_capacity(max_order + 1);
        for k in 0..=max_order {
            let entries = multi_indices(self.d, k)
                .into_iter()
                .map(|mi| {
                    let mult = multinomial(&mi);
                    let exp = PartialExpansion::new(&mi);
                    (mi, mult, exp)
                })
                .collect();
            by_order.push(entries);
        }
        Ok(PartialsTable {
            spec: *self,
            inv_c: self.normalising_constant().recip(),
            by_order,
        })
    }

    /// `∫_{b(0,1)} u^α ∂^β κ^γ(u) du` by adaptive quadrature.
    pub fn quad_monomial_vs_derivative(
        &self,
        monomial: &[usize],
        derivative: &[usize],
        opts: QuadOptions,
    ) -> Result<T, KernelError> {
        if monomial.len() != self.d {
            return Err(KernelError::DimensionMismatch {
                expected: self.d,
                got: monomial.len(),
            });
        }
        let exp = self.partial_expansion(derivative)?;
        let r = integrate_unit_ball(self.d, opts, |u: &[T]| [monomial_value(monomial, u) * exp.eval(self, u)])?;
        Ok(r.values[0])
    }

    /// Derivative of order `order` of `g_u(v) = v^{d+2} κ^γ(v u)`.
    pub fn gu_derivative(&self, u: &[T], order: usize, v: T) -> Result<T, KernelError> {
        self.partials_table(order)?.gu_derivative(u, order, v)
    }
}

/// Constants of a Beta kernel: `c`, `Q = ∫κ²`, `V = ∫x_i²κ`, `V₄ = ∫x_i⁴κ` and,
/// for `d ≥ 2`, `V₂ = ∫x_i²x_j²κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments<T> {
    pub d: usize,
    pub c: T,
    pub q: T,
    pub v: T,
    pub v4: T,
    v2: Option<T>,
}

impl<T: Scalar> KernelMoments<T> {
    pub fn v2(&self) -> Result<T, KernelError> {
        self.v2.ok_or(KernelError::MixedMomentUndefined)
    }
}

/// `κ^γ` with its normalising constant precomputed.
#[derive(Debug, Clone, Copy)]
pub struct KernelEval<T> {
    gamma: T,
    inv_c: T,
    integer_gamma: Option<i32>,
}

fn integer_power<T: Scalar>(g: T) -> Option<i32> {
    (g.fract() == T::zero() && g <= T::c(64.0)).then(|| g.to_i32().unwrap_or(0))
}

impl<T: Scalar> KernelEval<T> {
    /// `κ^γ` at a point given by its squared norm.
    #[inline]
    pub fn at_sq_norm(&self, r2: T) -> T {
        let s = T::one() - r2;
        if s < T::zero() {
            return T::zero();
        }
        let p = match self.integer_gamma {
            Some(k) => s.powi(k),
            None => s.powf(self.gamma),
        };
        p * self.inv_c
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        self.at_sq_norm(x.iter().fold(T::zero(), |acc, &v| acc + v * v))
    }
}

/// `∂^β κ^γ` written as `Σ coef · f^{(m)}(s) · x^e` with `s = 1 - xᵀx` and
/// `f(s) = s^γ / c(d, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialExpansion {
    terms: Vec<ExpansionTerm>,
}

#[derive(Debug, Clone, PartialEq)]
struct ExpansionTerm {
    coef: f64,
    s_order: usize,
    exponents: Vec<usize>,
}

impl PartialExpansion {
    fn new(multi_index: &[usize]) -> Self {
        let d = multi_index.len();
        let mut terms: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
        terms.insert((0, vec![0; d]), 1.0);
        for (j, &times) in multi_index.iter().enumerate() {
            for _ in 0..times {
                let mut next: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
                for ((m, e), c) in terms {
                    // d/dx_j f^{(m)}(s) = -2 x_j f^{(m+1)}(s)
                    let mut up = e.clone();
                    up[j] += 1;
                    *next.entry((m + 1, up)).or_default() += -2.0 * c;
                    if e[j] > 0 {
                        let mut down = e.clone();
                        down[j] -= 1;
                        *next.entry((m, down)).or_default() += c * e[j] as f64;
                    }
                }
                terms = next;
            }
        }
        let mut terms: Vec<ExpansionTerm> = terms
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((s_order, exponents), coef)| ExpansionTerm {
                coef,
                s_order,
                exponents,
            })
            .collect();
        // deterministic summation order
        terms.sort_by(|a, b| (a.s_order, &a.exponents).cmp(&(b.s_order, &b.exponents)));
        Self { terms }
    }

    /// Evaluates the expansion; exactly zero on and outside the unit sphere.
    pub fn eval<T: Scalar>(&self, spec: &KernelSpec<T>, x: &[T]) -> T {
        self.eval_scaled(spec.gamma, spec.normalising_constant().recip(), x)
    }

    pub(crate) fn eval_scaled<T: Scalar>(&self, gamma: T, inv_c: T, x: &[T]) -> T {
        let s = T::one() - x.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let only_value = self.terms.len() == 1 && self.terms[0].s_order == 0;
        if s < T::zero() || (s == T::zero() && !only_value) {
            return T::zero();
        }
        let max_m = self.terms.iter().map(|t| t.s_order).max().unwrap_or(0);
        // f^{(m)}(s) = γ(γ-1)…(γ-m+1) s^{γ-m}
        let mut derivs = [T::zero(); MAX_DERIVATIVE_ORDER + 1];
        let mut falling = T::one();
        for (m, slot) in derivs.iter_mut().enumerate().take(max_m + 1) {
            *slot = falling * s.powf(gamma - T::from_usize_(m));
            falling = falling * (gamma - T::from_usize_(m));
        }
        let mut acc = T::zero();
        for t in &self.terms {
            acc = acc + T::c(t.coef) * derivs[t.s_order] * monomial_value(&t.exponents, x);
        }
        acc * inv_c
    }
}

/// Every partial of a kernel up to some order, expanded once.
#[derive(Debug, Clone)]
pub struct PartialsTable<T> {
    spec: KernelSpec<T>,
    inv_c: T,
    by_order: Vec<Vec<(Vec<usize>, f64, PartialExpansion)>>,
}

impl<T: Scalar> PartialsTable<T> {
    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn max_order(&self) -> usize {
        self.by_order.len() - 1
    }

    /// Directional derivative `D^k κ^γ(x)(u, …, u) = Σ_{|β|=k} k!/β! u^β ∂^β κ^γ(x)`.
    pub fn directional(&self, x: &[T], u: &[T], k: usize) -> T {
        let mut acc = T::zero();
        for (mi, mult, exp) in &self.by_order[k] {
            acc = acc + T::c(*mult) * monomial_value(mi, u) * exp.eval_scaled(self.spec.gamma, self.inv_c, x);
        }
        acc
    }

    /// `g_u^{(m)}(v) = Σ_j C(m, j) (d+2)_{m-j} v^{d+2-(m-j)} D^jκ^γ(v u)(u^j)`,
    /// the Leibniz expansion of `v^{d+2} κ^γ(v u)`.
    pub fn gu_derivative(&self, u: &[T], order: usize, v: T) -> Result<T, KernelError> {
        Ok(self.gu_derivatives(u, order, v)?[order])
    }

    /// `[g_u(v), g_u'(v), …, g_u^{(max_order)}(v)]`, sharing the directional
    /// derivatives of the kernel between orders.
    pub fn gu_derivatives(&self, u: &[T], max_order: usize, v: T) -> Result<Vec<T>, KernelError> {
        if max_order > self.max_order() {
            self.spec.check_smoothness(max_order)?;
            return Err(KernelError::OrderTooHigh(max_order));
        }
        if !(v > T::zero()) {
            return Err(KernelError::NonPositiveScale(v.to_f64_()));
        }
        if u.len() != self.spec.d {
            return Err(KernelError::DimensionMismatch {
                expected: self.spec.d,
                got: u.len(),
            });
        }
        let x: Vec<T> = u.iter().map(|&ui| ui * v).collect();
        let dirs: Vec<T> = (0..=max_order).map(|j| self.directional(&x, u, j)).collect();
        let p = self.spec.d as i32 + 2;
        Ok((0..=max_order)
            .map(|m| {
                let mut acc = T::zero();
                for (j, &dj) in dirs.iter().enumerate().take(m + 1) {
                    let falling = falling_factorial(p, m - j);
                    if falling == 0.0 {
                        continue;
                    }
                    let coef = binomial(m, j) * falling;
                    acc = acc + T::c(coef) * v.powi(p - (m - j) as i32) * dj;
                }
                acc
            })
            .collect())
    }
}

/// `Π x_i^{e_i}`.
#[inline]
pub fn monomial_value<T: Scalar>(exponents: &[usize], x: &[T]) -> T {
    exponents
        .iter()
        .zip(x)
        .fold(T::one(), |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
}

/// All multi-indices of length `d` with entries summing to `k`, in lexicographic order.
pub fn multi_indices(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, k: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d - 1 {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(d, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        rec(d, k, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// `|β|! / Π β_i!`.
pub fn multinomial(mi: &[usize]) -> f64 {
    let k: usize = mi.iter().sum();
    mi.iter().fold(factorial(k), |acc, &b| acc / factorial(b))
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `p (p-1) … (p-k+1)`.
pub(crate) fn falling_factorial(p: i32, k: usize) -> f64 {
    (0..k as i32).fold(1.0, |acc, i| acc * (p - i) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(d: usize, g: f64) -> KernelSpec<f64> {
        KernelSpec::new(d, g).unwrap()
    }

    #[test]
    fn rejects_invalid_specs() {
        assert_eq!(KernelSpec::new(0, 1.0_f64), Err(KernelError::ZeroDimension));
        assert!(matches!(KernelSpec::new(1, -0.5_f64), Err(KernelError::InvalidGamma(_))));
        assert!(matches!(KernelSpec::new(1, f64::NAN), Err(KernelError::InvalidGamma(_))));
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(spec(1, 0.0).eval(&[0.3]), 0.5);
        assert!((spec(2, 1.0).eval(&[0.0, 0.0]) - 2.0 / PI).abs() < 1e-15);
        assert_eq!(spec(2, 1.0).eval(&[1.2, 0.0]), 0.0);
        let e = spec(2, 1.0).evaluator();
        assert!((e.eval(&[0.3, 0.4]) - spec(2, 1.0).eval(&[0.3, 0.4])).abs() < 1e-16);
        assert_eq!(e.eval(&[0.9, 0.9]), 0.0);
    }

    #[test]
    fn partial_examples() {
        assert_eq!(spec(1, 2.0).partial(&[1], &[0.0]).unwrap(), 0.0);
        let v = spec(1, 2.0).partial(&[1], &[0.5]).unwrap();
        assert!((v + 1.40625).abs() < 1e-14, "{v}");
        let k = spec(2, 3.0);
        for mi in [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]] {
            assert_eq!(k.partial(&mi, &[1.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn partial_rejects_insufficient_smoothness() {
        assert_eq!(
            spec(1, 2.0).partial(&[2], &[0.1]),
            Err(KernelError::Smoothness { order: 2, gamma: 2.0 })
        );
        assert!(matches!(spec(2, 9.0).partial(&[6, 0], &[0.1, 0.0]), Err(KernelError::OrderTooHigh(6))));
        assert!(matches!(
            spec(2, 3.0).partial(&[1], &[0.1, 0.0]),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn moment_examples() {
        let m = spec(2, 1.0).moments();
        assert!((m.q - 4.0 / (3.0 * PI)).abs() < 1e-15);
        assert!((m.v - 1.0 / 6.0).abs() < 1e-16);
        assert!((m.v4 - 3.0 / 48.0).abs() < 1e-16);
        assert!((m.v2().unwrap() - 1.0 / 48.0).abs() < 1e-16);
        assert!((spec(1, 0.0).moments().q - 0.5).abs() < 1e-16);
        assert_eq!(spec(1, 0.0).moments().v2(), Err(KernelError::MixedMomentUndefined));
    }

    #[test]
    fn two_dimensional_q_special_case() {
        for g in [0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 6.0] {
            let q = spec(2, g).moments().q;
            let special = (g + 1.0) * (g + 1.0) / ((2.0 * g + 1.0) * PI);
            assert!(((q - special) / special).abs() < 1e-12, "gamma={g}");
        }
    }

    #[test]
    fn multi_index_enumeration() {
        assert_eq!(multi_indices(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices(3, 3).len(), 10);
        assert_eq!(multi_indices(1, 4), vec![vec![4]]);
        assert_eq!(multinomial(&[2, 1, 1]), 12.0);
    }

    #[test]
    fn gu_examples() {
        let k = spec(1, 5.0);
        let u = [0.4];
        assert!((k.gu_derivative(&u, 0, 1.0).unwrap() - k.eval(&u)).abs() < 1e-15);
        let k0 = k.eval(&[0.0]);
        assert!((k.gu_derivative(&[0.0], 1, 1.0).unwrap() - 3.0 * k0).abs() < 1e-14);
        for order in 0..=4 {
            assert_eq!(k.gu_derivative(&[0.8], order, 1.5).unwrap(), 0.0);
        }
        assert!(matches!(k.gu_derivative(&u, 1, 0.0), Err(KernelError::NonPositiveScale(_))));
        assert!(matches!(spec(1, 3.0).gu_derivative(&u, 4, 1.0), Err(KernelError::Smoothness { .. })));
    }
}
