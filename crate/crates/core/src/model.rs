//! Intensity functions with exact partial derivatives, the Abramson weight
//! `c(x) = √(λ(x)/λ(x₀))`, and pair-correlation models.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::scalar::Scalar;

/// Highest total derivative order the intensity models expose.
pub const MAX_INTENSITY_ORDER: usize = 5;
/// Highest total derivative order of the Abramson weight.
pub const MAX_WEIGHT_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("window bounds must satisfy lower < upper in every coordinate")]
    EmptyWindow,
    #[error("window has dimension {window}, got a {got}-dimensional {what}")]
    DimensionMismatch {
        window: usize,
        got: usize,
        what: &'static str,
    },
    #[error("point {0:?} lies outside the observation window")]
    OutsideWindow(Vec<f64>),
    #[error("derivative order {got} exceeds the supported maximum {max}")]
    OrderTooHigh { got: usize, max: usize },
    #[error("log-polynomial intensity must have total degree <= 4, got {0}")]
    DegreeTooHigh(usize),
    #[error("intensity is not bounded away from zero on the window (minimum {0:e})")]
    NotPositive(f64),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("Thomas pair correlation is only implemented for d = 2, got d = {0}")]
    ThomasDimension(usize),
}

/// Axis-aligned open box `W = (lower, upper)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Window<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, ModelError> {
        if lower.is_empty() || lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(ModelError::EmptyWindow);
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(d: usize) -> Self {
        Self::new(vec![T::zero(); d], vec![T::one(); d]).expect("unit box")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (&l, &u)| acc * (u - l))
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&l, &u))| l < v && v < u)
    }

    /// Distance from `x` to the complement of the box (zero outside).
    pub fn boundary_distance(&self, x: &[T]) -> T {
        if !self.contains(x) {
            return T::zero();
        }
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(T::infinity(), |acc, (&v, (&l, &u))| acc.min(v - l).min(u - v))
    }

    /// Whether the closed ball `b(center, radius)` lies inside `W`.
    pub fn contains_ball(&self, center: &[T], radius: T) -> bool {
        self.boundary_distance(center) > radius
    }

    pub fn check_point(&self, x: &[T], what: &'static str) -> Result<(), ModelError> {
        if x.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                window: self.dim(),
                got: x.len(),
                what,
            });
        }
        if !self.contains(x) {
            return Err(ModelError::OutsideWindow(x.iter().map(|v| v.to_f64_()).collect()));
        }
        Ok(())
    }
}

/// Multivariate polynomial with exponent-vector keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    dim: usize,
    terms: BTreeMap<Vec<usize>, T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<usize>, T)>) -> Result<Self, ModelError> {
        let mut p = Self::zero(dim);
        for (e, c) in terms {
            if e.len() != dim {
                return Err(ModelError::DimensionMismatch {
                    window: dim,
                    got: e.len(),
                    what: "polynomial exponent",
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_term(&mut self, exponents: Vec<usize>, c: T) {
        let slot = self.terms.entry(exponents).or_insert_with(T::zero);
        *slot = *slot + c;
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, c)| **c != T::zero())
            .map(|(e, _)| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], T)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.terms
            .iter()
            .fold(T::zero(), |acc, (e, &c)| acc + c * crate::kernel::monomial_value(e, x))
    }

    pub fn derivative(&self, j: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, &c) in &self.terms {
            if e[j] > 0 {
                let mut down = e.clone();
                down[j] -= 1;
                out.add_term(down, c * T::from_usize_(e[j]));
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|(e, &c)| (e.clone(), c * s)).collect(),
        }
    }
}

/// `∂^β exp(P) = exp(P) · Q_β` where `Q_β` is built by `Q ↦ Q·∂_jP + ∂_jQ`.
fn exp_poly_factor<T: Scalar>(exponent: &Polynomial<T>, multi_index: &[usize]) -> Polynomial<T> {
    let mut q = Polynomial::constant(exponent.dim(), T::one());
    for (j, &times) in multi_index.iter().enumerate() {
        let pj = exponent.derivative(j);
        for _ in 0..times {
            q = q.mul(&pj).add(&q.derivative(j));
        }
    }
    q
}

/// Parametric intensity families.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensityFamily<T> {
    /// `λ(x) = a`.
    Constant { a: T },
    /// `λ(x) = exp(P(x))`, total degree of `P` at most 4.
    LogPolynomial { exponent: Polynomial<T> },
    /// `λ(x) = a + b·exp(-‖x - m‖² / (2s²))`.
    GaussianBump { a: T, b: T, center: Vec<T>, scale: T },
}

/// An intensity function on a window together with stored bounds
/// `λ_min ≤ λ(x) ≤ λ_max` on `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel<T> {
    family: IntensityFamily<T>,
    window: Window<T>,
    /// Exponent polynomial of the Gaussian bump, cached.
    bump_exponent: Option<Polynomial<T>>,
    lambda_min: T,
    lambda_max: T,
}

impl<T: Scalar> IntensityModel<T> {
    pub fn new(family: IntensityFamily<T>, window: Window<T>) -> Result<Self, ModelError> {
        let d = window.dim();
        let mut bump_exponent = None;
        match &family {
            IntensityFamily::Constant { a } => {
                if !(*a > T::zero()) || !a.is_finite() {
                    return Err(ModelError::NotPositive(a.to_f64_()));
                }
            }
            IntensityFamily::LogPolynomial { exponent } => {
                if exponent.dim() != d {
                    return Err(ModelError::DimensionMismatch {
                        window: d,
                        got: exponent.dim(),
                        what: "log-polynomial exponent",
                    });
                }
                if exponent.degree() > 4 {
                    return Err(ModelError::DegreeTooHigh(exponent.degree()));
                }
            }
            IntensityFamily::GaussianBump { a, b, center, scale } => {
                if center.len() != d {
                    return Err(ModelError::DimensionMismatch {
                        window: d,
                        got: center.len(),
                        what: "bump centre",
                    });
                }
                if !(*scale > T::zero()) {
                    return Err(ModelError::InvalidParameter {
                        name: "scale",
                        reason: "must be positive".into(),
                    });
                }
                if !a.is_finite() || !b.is_finite() {
                    return Err(ModelError::InvalidParameter {
                        name: "a/b",
                        reason: "must be finite".into(),
                    });
                }
                // -‖x - m‖² / (2 s²)
                let k = -(T::c(2.0) * *scale * *scale).recip();
                let mut p = Polynomial::zero(d);
                for (j, &m) in center.iter().enumerate() {
                    let mut e2 = vec![0; d];
                    e2[j] = 2;
                    let mut e1 = vec![0; d];
                    e1[j] = 1;
                    p.add_term(e2, k);
                    p.add_term(e1, T::c(-2.0) * m * k);
                    p.add_term(vec![0; d], m * m * k);
                }
                bump_exponent = Some(p);
            }
        }
        let mut model = Self {
            family,
            window,
            bump_exponent,
            lambda_min: T::zero(),
            lambda_max: T::zero(),
        };
        let (lo, hi) = model.search_bounds();
        if !(lo > T::zero()) {
            return Err(ModelError::NotPositive(lo.to_f64_()));
        }
        model.lambda_min = lo;
        model.lambda_max = hi;
        Ok(model)
    }

    pub fn family(&self) -> &IntensityFamily<T> {
        &self.family
    }

    pub fn window(&self) -> &Window<T> {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn lambda_min(&self) -> T {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, IntensityFamily::Constant { .. })
    }

    /// `λ(x)` without the window check; valid on all of `ℝ^d`.
    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        match &self.family {
            IntensityFamily::Constant { a } => *a,
            IntensityFamily::LogPolynomial { exponent } => exponent.eval(x).exp(),
            IntensityFamily::GaussianBump { a, b, center, scale } => {
                let r2 = x
                    .iter()
                    .zip(center)
                    .fold(T::zero(), |acc, (&xi, &mi)| acc + (xi - mi) * (xi - mi));
                *a + *b * (-r2 / (T::c(2.0) * *scale * *scale)).exp()
            }
        }
    }

    pub fn intensity_at(&self, x: &[T]) -> Result<T, ModelError> {
        self.window.check_point(x, "point")?;
        Ok(self.value(x))
    }

    /// `∂^β λ(x)` without the window check.
    pub fn partial_unchecked(&self, multi_index: &[usize]) -> impl Fn(&[T]) -> T + '_ {
        let order: usize = multi_index.iter().sum();
        let factor = match &self.family {
            IntensityFamily::Constant { .. } => None,
            IntensityFamily::LogPolynomial { exponent } => Some(exp_poly_factor(exponent, multi_index)),
            IntensityFamily::GaussianBump { b, .. } => {
                let e = self.bump_exponent.as_ref().expect("bump exponent");
                Some(exp_poly_factor(e, multi_index).scale(*b))
            }
        };
        move |x: &[T]| {
            if order == 0 {
                return self.value(x);
            }
            match (&self.family, &factor) {
                (IntensityFamily::Constant { .. }, _) => T::zero(),
                (IntensityFamily::LogPolynomial { exponent }, Some(q)) => exponent.eval(x).exp() * q.eval(x),
                (IntensityFamily::GaussianBump { .. }, Some(q)) => {
                    let e = self.bump_exponent.as_ref().expect("bump exponent");
                    e.eval(x).exp() * q.eval(x)
                }
                _ => unreachable!(),
            }
        }
    }

    pub fn intensity_partial(&self, multi_index: &[usize], x: &[T]) -> Result<T, ModelError> {
        self.check_multi_index(multi_index, MAX_INTENSITY_ORDER)?;
        self.window.check_point(x, "point")?;
        Ok(self.partial_unchecked(multi_index)(x))
    }

    /// `Σ_i λ_ii(x)`.
    pub fn laplacian(&self, x: &[T]) -> Result<T, ModelError> {
        let d = self.dim();
        let mut acc = T::zero();
        for i in 0..d {
            let mut mi = vec![0; d];
            mi[i] = 2;
            acc = acc + self.intensity_partial(&mi, x)?;
        }
        Ok(acc)
    }

    fn check_multi_index(&self, multi_index: &[usize], max: usize) -> Result<(), ModelError> {
        if multi_index.len() != self.dim() {
            return Err(ModelError::DimensionMismatch {
                window: self.dim(),
                got: multi_index.len(),
                what: "multi-index",
            });
        }
        let order: usize = multi_index.iter().sum();
        if order > max {
            return Err(ModelError::OrderTooHigh { got: order, max });
        }
        Ok(())
    }

    fn gradient_norm(&self, x: &[T]) -> T {
        let d = self.dim();
        (0..d)
            .map(|i| {
                let mut mi = vec![0; d];
                mi[i] = 1;
                let g = self.partial_unchecked(&mi)(x);
                g * g
            })
            .fold(T::zero(), |a, b| a + b)
            .sqrt()
    }

    /// Grid search over the closed window, widened by a first-order Lipschitz
    /// margin so the stored values bound λ between grid nodes too.
    fn search_bounds(&self) -> (T, T) {
        if let IntensityFamily::Constant { a } = self.family {
            return (a, a);
        }
        let d = self.dim();
        let per_axis: usize = match d {
            1 => 4001,
            2 => 301,
            3 => 61,
            _ => 17,
        };
        let steps: Vec<T> = self
            .window
            .lower
            .iter()
            .zip(&self.window.upper)
            .map(|(&l, &u)| (u - l) / T::from_usize_(per_axis - 1))
            .collect();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        let mut grad_max = T::zero();
        let mut idx = vec![0usize; d];
        let mut x = vec![T::zero(); d];
        loop {
            for j in 0..d {
                x[j] = self.window.lower[j] + steps[j] * T::from_usize_(idx[j]);
            }
            let v = self.value(&x);
            lo = lo.min(v);
            hi = hi.max(v);
            grad_max = grad_max.max(self.gradient_norm(&x));
            let mut j = 0;
            loop {
                if j == d {
                    break;
                }
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        if let IntensityFamily::GaussianBump { a, b, center, .. } = &self.family {
            let inside = center
                .iter()
                .zip(self.window.lower.iter().zip(&self.window.upper))
                .all(|(&m, (&l, &u))| l <= m && m <= u);
            if inside {
                let peak = *a + *b;
                lo = lo.min(peak);
                hi = hi.max(peak);
            }
        }
        let half_diag = steps.iter().fold(T::zero(), |acc, &s| acc + s * s).sqrt() * T::c(0.5);
        let margin = grad_max * T::c(1.1) * half_diag;
        (lo - margin, hi + margin)
    }
}

/// All set partitions of `{0, …, k-1}`, as lists of blocks.
pub(crate) fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, k: usize, blocks: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == k {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b].push(i);
            rec(i + 1, k, blocks, out);
            blocks[b].pop();
        }
        blocks.push(vec![i]);
        rec(i + 1, k, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

fn expand_multi_index(multi_index: &[usize]) -> Vec<usize> {
    multi_index
        .iter()
        .enumerate()
        .flat_map(|(j, &t)| std::iter::repeat_n(j, t))
        .collect()
}

fn collapse(coords: &[usize], d: usize) -> Vec<usize> {
    let mut mi = vec![0; d];
    for &c in coords {
        mi[c] += 1;
    }
    mi
}

/// The Abramson weight `c(x) = √(λ(x)/λ(x₀))` of a model anchored at `x₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbramsonWeight<T> {
    model: IntensityModel<T>,
    anchor: Vec<T>,
    lambda_anchor: T,
    /// `½(P - P(x₀))` for log-polynomial models.
    half_log: Option<Polynomial<T>>,
}

impl<T: Scalar> AbramsonWeight<T> {
    pub fn new(model: IntensityModel<T>, anchor: Vec<T>) -> Result<Self, ModelError> {
        model.window.check_point(&anchor, "anchor")?;
        let lambda_anchor = model.value(&anchor);
        let half_log = match &model.family {
            IntensityFamily::LogPolynomial { exponent } => {
                let p0 = exponent.eval(&anchor);
                let mut h = exponent.scale(T::c(0.5));
                h.add_term(vec![0; model.dim()], -p0 * T::c(0.5));
                Some(h)
            }
            _ => None,
        };
        Ok(Self {
            model,
            anchor,
            lambda_anchor,
            half_log,
        })
    }

    pub fn model(&self) -> &IntensityModel<T> {
        &self.model
    }

    pub fn anchor(&self) -> &[T] {
        &self.anchor
    }

    pub fn lambda_anchor(&self) -> T {
        self.lambda_anchor
    }

    /// `c(x)` without the window check.
    #[inline]
    pub fn value(&self, x: &[T]) -> T {
        match &self.half_log {
            Some(h) => h.eval(x).exp(),
            None => (self.model.value(x) / self.lambda_anchor).sqrt(),
        }
    }

    /// Lower bound of `c` on the window, `√(λ_min/λ(x₀))`.
    pub fn min_on_window(&self) -> T {
        (self.model.lambda_min / self.lambda_anchor).sqrt()
    }

    pub fn abramson_weight_partial(&self, multi_index: &[usize], x: &[T]) -> Result<T, ModelError> {
        self.model.check_multi_index(multi_index, MAX_WEIGHT_ORDER)?;
        self.model.window.check_point(x, "point")?;
        Ok(match &self.half_log {
            Some(h) => h.eval(x).exp() * exp_poly_factor(h, multi_index).eval(x),
            None => self.chain_rule_partial(multi_index, x),
        })
    }

    /// Multivariate Faà di Bruno: `∂_{i₁…i_k} f(λ) = Σ_π f^{(|π|)}(λ) Π_{B∈π} λ_B`
    /// with `f(t) = √(t/λ(x₀))`. Valid for every family.
    pub fn chain_rule_partial(&self, multi_index: &[usize], x: &[T]) -> T {
        let d = self.model.dim();
        let coords = expand_multi_index(multi_index);
        let k = coords.len();
        let lam = self.model.value(x);
        if k == 0 {
            return (lam / self.lambda_anchor).sqrt();
        }
        // f^{(m)}(t) = (1/2)(-1/2)…(3/2-m) t^{1/2-m} / √λ₀
        let f_deriv = |m: usize| {
            let falling = (0..m).fold(1.0, |acc, i| acc * (0.5 - i as f64));
            T::c(falling) * lam.powf(T::c(0.5 - m as f64)) / self.lambda_anchor.sqrt()
        };
        let mut acc = T::zero();
        for partition in set_partitions(k) {
            let mut prod = f_deriv(partition.len());
            for block in &partition {
                let block_coords: Vec<usize> = block.iter().map(|&i| coords[i]).collect();
                prod = prod * self.model.partial_unchecked(&collapse(&block_coords, d))(x);
            }
            acc = acc + prod;
        }
        acc
    }
}

/// Pair correlation `g(u, v) = ρ⁽²⁾(u, v)/(λ(u)λ(v))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairCorrelationModel<T> {
    Poisson,
    /// Planar Thomas process: parent intensity `κ`, mean offspring count `μ`,
    /// Gaussian displacement scale `σ`.
    Thomas {
        parent_intensity: T,
        offspring_mean: T,
        sigma: T,
    },
}

impl<T: Scalar> PairCorrelationModel<T> {
    pub fn thomas(parent_intensity: T, offspring_mean: T, sigma: T) -> Result<Self, ModelError> {
        for (name, v) in [
            ("parent_intensity", parent_intensity),
            ("sigma", sigma),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: "must be positive and finite".into(),
                });
            }
        }
        if !(offspring_mean >= T::zero()) || !offspring_mean.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "offspring_mean",
                reason: "must be non-negative and finite".into(),
            });
        }
        Ok(Self::Thomas {
            parent_intensity,
            offspring_mean,
            sigma,
        })
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, Self::Poisson)
    }

    /// Upper bound `ḡ`.
    pub fn g_max(&self) -> T {
        match *self {
            Self::Poisson => T::one(),
            Self::Thomas {
                parent_intensity,
                sigma,
                ..
            } => T::one() + (T::c(4.0) * T::PI() * sigma * sigma * parent_intensity).recip(),
        }
    }

    /// `g(u, v) - 1`, without dimension checks.
    #[inline]
    pub fn excess(&self, u: &[T], v: &[T]) -> T {
        match *self {
            Self::Poisson => T::zero(),
            Self::Thomas {
                parent_intensity,
                sigma,
                ..
            } => {
                let r2 = u.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                let s2 = sigma * sigma;
                (-r2 / (T::c(4.0) * s2)).exp() / (T::c(4.0) * T::PI() * s2 * parent_intensity)
            }
        }
    }

    pub fn check_dimension(&self, d: usize) -> Result<(), ModelError> {
        match self {
            Self::Thomas { .. } if d != 2 => Err(ModelError::ThomasDimension(d)),
            _ => Ok(()),
        }
    }

    pub fn pair_correlation_at(&self, u: &[T], v: &[T]) -> Result<T, ModelError> {
        self.check_dimension(u.len())?;
        if u.len() != v.len() {
            return Err(ModelError::DimensionMismatch {
                window: u.len(),
                got: v.len(),
                what: "point",
            });
        }
        Ok(T::one() + self.excess(u, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_window(d: usize) -> Window<f64> {
        Window::new(vec![-1.0; d], vec![1.0; d]).unwrap()
    }

    fn log_linear_1d(beta: f64) -> IntensityModel<f64> {
        let p = Polynomial::from_terms(1, [(vec![1], beta)]).unwrap();
        IntensityModel::new(IntensityFamily::LogPolynomial { exponent: p }, unit_window(1)).unwrap()
    }

    #[test]
    fn window_validation() {
        assert_eq!(Window::new(vec![0.0], vec![0.0]), Err(ModelError::EmptyWindow));
        assert_eq!(Window::<f64>::new(vec![], vec![]), Err(ModelError::EmptyWindow));
        let w = Window::unit(2);
        assert!(w.contains(&[0.5, 0.5]));
        assert!(!w.contains(&[0.0, 0.5]));
        assert!(w.contains_ball(&[0.5, 0.5], 0.49));
        assert!(!w.contains_ball(&[0.5, 0.5], 0.5));
        assert_eq!(w.volume(), 1.0);
    }

    #[test]
    fn constant_model_examples() {
        let m = IntensityModel::new(IntensityFamily::Constant { a: 100.0 }, unit_window(2)).unwrap();
        assert_eq!(m.intensity_at(&[0.1, 0.2]).unwrap(), 100.0);
        for mi in [[1, 0], [0, 2], [2, 1], [3, 2]] {
            assert_eq!(m.intensity_partial(&mi, &[0.1, 0.2]).unwrap(), 0.0);
        }
        assert_eq!((m.lambda_min(), m.lambda_max()), (100.0, 100.0));
        assert!(matches!(m.intensity_at(&[1.5, 0.0]), Err(ModelError::OutsideWindow(_))));
        assert!(matches!(
            m.intensity_partial(&[3, 3], &[0.0, 0.0]),
            Err(ModelError::OrderTooHigh { got: 6, max: 5 })
        ));
    }

    #[test]
    fn log_linear_log_derivative() {
        let m = log_linear_1d(0.8);
        for x in [-0.7, 0.0, 0.33, 0.9] {
            let r = m.intensity_partial(&[1], &[x]).unwrap() / m.intensity_at(&[x]).unwrap();
            assert!((r - 0.8).abs() < 1e-14);
        }
    }

    #[test]
    fn bump_second_derivative_at_centre() {
        let m = IntensityModel::new(
            IntensityFamily::GaussianBump {
                a: 50.0,
                b: 50.0,
                center: vec![0.0],
                scale: 0.5,
            },
            unit_window(1),
        )
        .unwrap();
        assert!((m.intensity_partial(&[2], &[0.0]).unwrap() + 200.0).abs() < 1e-12);
        assert!(m.lambda_max() >= 100.0 && m.lambda_max() < 100.05);
        assert!(m.lambda_min() <= m.value(&[1.0]));
    }

    #[test]
    fn rejects_high_degree_and_nonpositive() {
        let p = Polynomial::from_terms(1, [(vec![5], 1.0)]).unwrap();
        assert_eq!(
            IntensityModel::new(IntensityFamily::LogPolynomial { exponent: p }, unit_window(1)),
            Err(ModelError::DegreeTooHigh(5))
        );
        let bad = IntensityModel::new(
            IntensityFamily::GaussianBump {
                a: -1.0,
                b: 0.5,
                center: vec![0.0],
                scale: 0.1,
            },
            unit_window(1),
        );
        assert!(matches!(bad, Err(ModelError::NotPositive(_))));
    }

    #[test]
    fn abramson_weight_log_linear() {
        let m = log_linear_1d(0.8);
        let w = AbramsonWeight::new(m, vec![0.2]).unwrap();
        assert_eq!(w.abramson_weight_partial(&[0], &[0.2]).unwrap(), 1.0);
        assert!((w.abramson_weight_partial(&[1], &[0.2]).unwrap() - 0.4).abs() < 1e-15);
        assert!((w.abramson_weight_partial(&[2], &[0.2]).unwrap() - 0.16).abs() < 1e-15);
        // both derivative routes agree
        for k in 0..=4 {
            let a = w.abramson_weight_partial(&[k], &[0.5]).unwrap();
            let b = w.chain_rule_partial(&[k], &[0.5]);
            assert!((a - b).abs() < 1e-13 * a.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (k, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(k).len(), b);
        }
    }

    #[test]
    fn pair_correlation_examples() {
        let p = PairCorrelationModel::<f64>::Poisson;
        assert_eq!(p.pair_correlation_at(&[0.1, 0.2], &[0.5, 0.5]).unwrap(), 1.0);
        let t = PairCorrelationModel::thomas(25.0, 4.0, 0.05).unwrap();
        let g0 = t.pair_correlation_at(&[0.3, 0.3], &[0.3, 0.3]).unwrap();
        let exact = 1.0 + 1.0 / (4.0 * std::f64::consts::PI * 0.0025 * 25.0);
        assert!((g0 - exact).abs() < 1e-12);
        assert!((g0 - 2.2732).abs() < 1e-4);
        assert!((t.pair_correlation_at(&[0.0, 0.0], &[5.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(t.g_max(), g0);
        assert_eq!(
            t.pair_correlation_at(&[0.0], &[0.0]),
            Err(ModelError::ThomasDimension(1))
        );
    }
}
