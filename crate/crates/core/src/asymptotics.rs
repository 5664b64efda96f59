//! Leading-order bias and variance of both estimators, the `h⁴` adaptive
//! bias coefficient `∫A(u; x₀) du`, and the AMSE-optimal bandwidths.

use thiserror::Error;

use crate::kernel::{multi_indices, multinomial, monomial_value, KernelError, KernelSpec, PartialsTable};
use crate::model::{AbramsonWeight, IntensityModel, ModelError};
use crate::quadrature::{integrate_unit_ball, QuadOptions, QuadratureError};
use crate::scalar::Scalar;

/// Kernel smoothness below which the `h⁴` adaptive expansion is not used.
pub const ADAPTIVE_MIN_GAMMA: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("the h^4 adaptive bias expansion requires gamma > 5, got {0}")]
    AdaptiveSmoothness(f64),
    #[error("kernel dimension {kernel} does not match model dimension {model}")]
    DimensionMismatch { kernel: usize, model: usize },
    #[error("closed form is only available for d = {expected}, got d = {got}")]
    ClosedFormDimension { expected: usize, got: usize },
    #[error("expansion order must be between 1 and 4, got {0}")]
    ExpansionOrder(usize),
    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
}

/// Outcome of an optimal-bandwidth formula. `h_star` is `None` exactly when
/// the formula divides by zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthResult<T> {
    pub h_star: Option<T>,
    pub rate_exponent: T,
    pub degenerate: bool,
}

impl<T: Scalar> BandwidthResult<T> {
    fn from_constant(constant: T, n: usize, dim_shift: usize, d: usize) -> Self {
        let rate_exponent = -T::from_usize_(d + dim_shift).recip();
        if !(constant > T::zero()) || !constant.is_finite() {
            return Self {
                h_star: None,
                rate_exponent,
                degenerate: true,
            };
        }
        let h = (constant / T::from_usize_(n)).powf(-rate_exponent);
        Self {
            h_star: Some(h),
            rate_exponent,
            degenerate: false,
        }
    }
}

/// Leading terms of the bias/variance expansion at one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionTerms<T> {
    pub bias_leading: T,
    pub var_leading: T,
    pub amse: T,
    /// `∫A(u; x₀) du` (adaptive only).
    pub a_integral: Option<T>,
    /// `C₄`, `C₂` (adaptive, `d = 2` only).
    pub c4: Option<T>,
    pub c2: Option<T>,
}

fn check_dims<T: Scalar>(model: &IntensityModel<T>, kernel: &KernelSpec<T>) -> Result<(), AsymptoticsError> {
    if model.dim() != kernel.dim() {
        return Err(AsymptoticsError::DimensionMismatch {
            kernel: kernel.dim(),
            model: model.dim(),
        });
    }
    Ok(())
}

fn check_positive<T: Scalar>(name: &'static str, v: T) -> Result<(), AsymptoticsError> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(AsymptoticsError::InvalidArgument {
            name,
            reason: format!("must be positive and finite, got {v}"),
        });
    }
    Ok(())
}

fn check_adaptive_gamma<T: Scalar>(kernel: &KernelSpec<T>) -> Result<(), AsymptoticsError> {
    if kernel.gamma() <= T::c(ADAPTIVE_MIN_GAMMA) {
        return Err(AsymptoticsError::AdaptiveSmoothness(kernel.gamma().to_f64_()));
    }
    Ok(())
}

/// `h² Σλ_ii(x₀) / (2(d + 2γ + 2))`.
pub fn bias_leading_fixed<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    h: T,
) -> Result<T, AsymptoticsError> {
    check_dims(model, kernel)?;
    check_positive("h", h)?;
    let lap = model.laplacian(x0)?;
    Ok(h * h * lap * kernel.moments().v / T::c(2.0))
}

/// `λ(x₀) Q(d, γ) / (n h^d)`, shared by both estimators.
pub fn var_leading<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    n: usize,
    h: T,
) -> Result<T, AsymptoticsError> {
    check_dims(model, kernel)?;
    check_positive("h", h)?;
    if n == 0 {
        return Err(AsymptoticsError::InvalidArgument {
            name: "n",
            reason: "must be at least 1".into(),
        });
    }
    let lambda = model.intensity_at(x0)?;
    Ok(lambda * kernel.moments().q / (T::from_usize_(n) * h.powi(kernel.dim() as i32)))
}

pub fn expansion_terms_fixed<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    n: usize,
    h: T,
) -> Result<ExpansionTerms<T>, AsymptoticsError> {
    let bias_leading = bias_leading_fixed(model, kernel, x0, h)?;
    let var_leading = var_leading(model, kernel, x0, n, h)?;
    Ok(ExpansionTerms {
        bias_leading,
        var_leading,
        amse: bias_leading * bias_leading + var_leading,
        a_integral: None,
        c4: None,
        c2: None,
    })
}

/// `n^{-1/(d+4)} (d λ Q / (V² L²))^{1/(d+4)}` from plain values, `L = Σλ_ii(x₀)`.
pub fn h_star_fixed_from_values<T: Scalar>(kernel: &KernelSpec<T>, lambda: T, laplacian: T, n: usize) -> BandwidthResult<T> {
    let m = kernel.moments();
    let d = kernel.dim();
    let constant = T::from_usize_(d) * lambda * m.q / (m.v * m.v * laplacian * laplacian);
    BandwidthResult::from_constant(constant, n, 4, d)
}

pub fn h_star_fixed<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    n: usize,
) -> Result<BandwidthResult<T>, AsymptoticsError> {
    check_dims(model, kernel)?;
    let lambda = model.intensity_at(x0)?;
    let lap = model.laplacian(x0)?;
    Ok(h_star_fixed_from_values(kernel, lambda, lap, n))
}

/// The planar form `n^{-1/6} (8λ(γ+1)²(γ+2)² / ((2γ+1)π L²))^{1/6}`.
pub fn h_star_fixed_planar<T: Scalar>(gamma: T, lambda: T, laplacian: T, n: usize) -> BandwidthResult<T> {
    let g1 = gamma + T::one();
    let g2 = gamma + T::c(2.0);
    let constant =
        T::c(8.0) * lambda * g1 * g1 * g2 * g2 / ((T::c(2.0) * gamma + T::one()) * T::PI() * laplacian * laplacian);
    BandwidthResult::from_constant(constant, n, 4, 2)
}

/// Weight partials `∂^β c(x₀)` grouped by order, with multinomial weights.
struct WeightTensor<T> {
    by_order: Vec<Vec<(Vec<usize>, T)>>,
}

impl<T: Scalar> WeightTensor<T> {
    fn new(weight: &AbramsonWeight<T>, max_order: usize) -> Result<Self, ModelError> {
        let d = weight.model().dim();
        let x0 = weight.anchor().to_vec();
        let mut by_order = Vec::with_capacity(max_order + 1);
        for k in 0..=max_order {
            let mut entries = Vec::new();
            for mi in multi_indices(d, k) {
                let v = weight.abramson_weight_partial(&mi, &x0)?;
                entries.push((mi.clone(), T::c(multinomial(&mi)) * v));
            }
            by_order.push(entries);
        }
        Ok(Self { by_order })
    }

    /// `D^k c(x₀)(u, …, u)`.
    fn directional(&self, u: &[T], k: usize) -> T {
        self.by_order[k]
            .iter()
            .fold(T::zero(), |acc, (mi, v)| acc + *v * monomial_value(mi, u))
    }
}

/// `A(u; x₀)` with its ingredients cached for repeated evaluation.
pub struct AIntegrand<T> {
    table: PartialsTable<T>,
    weight: WeightTensor<T>,
    lambda_anchor: T,
}

impl<T: Scalar> AIntegrand<T> {
    pub fn new(weight: &AbramsonWeight<T>, kernel: &KernelSpec<T>) -> Result<Self, AsymptoticsError> {
        check_dims(weight.model(), kernel)?;
        check_adaptive_gamma(kernel)?;
        Ok(Self {
            table: kernel.partials_table(4)?,
            weight: WeightTensor::new(weight, 4)?,
            lambda_anchor: weight.lambda_anchor(),
        })
    }

    pub fn lambda_anchor(&self) -> T {
        self.lambda_anchor
    }

    fn ingredients(&self, u: &[T]) -> Result<(Vec<T>, [T; 5]), AsymptoticsError> {
        let g = self.table.gu_derivatives(u, 4, T::one())?;
        let mut dc = [T::zero(); 5];
        for (k, slot) in dc.iter_mut().enumerate().skip(1) {
            *slot = self.weight.directional(u, k);
        }
        Ok((g, dc))
    }

    /// The four displayed terms of `A(u; x₀)`.
    pub fn eval(&self, u: &[T]) -> Result<T, AsymptoticsError> {
        let (g, dc) = self.ingredients(u)?;
        let c1 = dc[1];
        let t1 = g[1] / T::c(24.0) * dc[4];
        let t2 = g[4] / T::c(24.0) * c1.powi(4);
        let t3 = g[2] / T::c(2.0) * (c1 * dc[3] / T::c(3.0) + dc[2] * dc[2] / T::c(4.0));
        let t4 = g[3] / T::c(4.0) * c1 * c1 * dc[2];
        Ok(t1 + t2 + t3 + t4)
    }

    /// Coefficient of `h^order` in `Σ_m g_u^{(m)}(1)/m! · E(u)^m`, where
    /// `E(u) = c(x₀ + h u) - 1 = Σ_j h^j D^jc(x₀)(u^j)/j!`. Order 4 is `A`.
    pub fn expansion_coefficient(&self, u: &[T], order: usize) -> Result<T, AsymptoticsError> {
        if order == 0 || order > 4 {
            return Err(AsymptoticsError::ExpansionOrder(order));
        }
        let (g, dc) = self.ingredients(u)?;
        let mut e = [T::zero(); 5];
        let mut fact = T::one();
        for j in 1..=4 {
            fact = fact * T::from_usize_(j);
            e[j] = dc[j] / fact;
        }
        // power[k] = [h^k] E^m, updated by convolution with e for each m
        let mut power = [T::zero(); 5];
        power[0] = T::one();
        let mut acc = T::zero();
        let mut m_fact = T::one();
        for (m, &gm) in g.iter().enumerate().take(order + 1).skip(1) {
            let mut next = [T::zero(); 5];
            for (i, &p) in power.iter().enumerate() {
                for j in 1..=4 {
                    if i + j <= 4 {
                        next[i + j] = next[i + j] + p * e[j];
                    }
                }
            }
            power = next;
            m_fact = m_fact * T::from_usize_(m);
            acc = acc + gm / m_fact * power[order];
        }
        Ok(acc)
    }
}

/// `A(u; x₀)` at a single `u`.
pub fn a_integrand<T: Scalar>(weight: &AbramsonWeight<T>, kernel: &KernelSpec<T>, u: &[T]) -> Result<T, AsymptoticsError> {
    AIntegrand::new(weight, kernel)?.eval(u)
}

fn integrate_over_ball<T: Scalar, F>(d: usize, opts: QuadOptions, f: F) -> Result<T, AsymptoticsError>
where
    F: Fn(&[T]) -> Result<T, AsymptoticsError>,
{
    let mut first_err = None;
    let r = integrate_unit_ball(d, opts, |u: &[T]| match f(u) {
        Ok(v) => [v],
        Err(e) => {
            first_err.get_or_insert(e);
            [T::zero()]
        }
    })?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(r.values[0]),
    }
}

/// `∫A(u; x₀) du` by quadrature over the unit ball (every `g_u^{(k)}(1)`
/// vanishes outside it).
pub fn a_integral<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    opts: QuadOptions,
) -> Result<T, AsymptoticsError> {
    let weight = AbramsonWeight::new(model.clone(), x0.to_vec())?;
    let integrand = AIntegrand::new(&weight, kernel)?;
    integrate_over_ball(kernel.dim(), opts, |u| integrand.eval(u))
}

/// `∫` of the `h^order` coefficient of the adaptive bias expansion, divided
/// by `λ(x₀)`. Orders 1 to 3 vanish; order 4 equals [`a_integral`].
pub fn expansion_integral<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    order: usize,
    opts: QuadOptions,
) -> Result<T, AsymptoticsError> {
    let weight = AbramsonWeight::new(model.clone(), x0.to_vec())?;
    let integrand = AIntegrand::new(&weight, kernel)?;
    integrate_over_ball(kernel.dim(), opts, |u| integrand.expansion_coefficient(u, order))
}

/// One-dimensional closed form of `∫A`, i.e. `V₄(1,γ)/24` times the bracket
/// of intensity-derivative ratios.
pub fn a_integral_closed_1d<T: Scalar>(model: &IntensityModel<T>, x0: &[T], gamma: T) -> Result<T, AsymptoticsError> {
    if model.dim() != 1 {
        return Err(AsymptoticsError::ClosedFormDimension {
            expected: 1,
            got: model.dim(),
        });
    }
    let kernel = KernelSpec::new(1, gamma)?;
    check_adaptive_gamma(&kernel)?;
    let l: Vec<T> = (0..=4)
        .map(|k| model.intensity_partial(&[k], x0))
        .collect::<Result<_, _>>()?;
    let r1 = l[1] / l[0];
    let r2 = l[2] / l[0];
    let r3 = l[3] / l[0];
    let r4 = l[4] / l[0];
    let bracket = -r4 + T::c(8.0) * r3 * r1 + T::c(6.0) * r2 * r2 - T::c(36.0) * r2 * r1 * r1 + T::c(24.0) * r1.powi(4);
    Ok(kernel.moments().v4 / T::c(24.0) * bracket)
}

/// Planar constants `(C₄, C₂)` from the Abramson weight partials at `x₀`.
pub fn planar_constants<T: Scalar>(model: &IntensityModel<T>, x0: &[T]) -> Result<(T, T), AsymptoticsError> {
    if model.dim() != 2 {
        return Err(AsymptoticsError::ClosedFormDimension {
            expected: 2,
            got: model.dim(),
        });
    }
    let w = AbramsonWeight::new(model.clone(), x0.to_vec())?;
    let c = |a: usize, b: usize| w.abramson_weight_partial(&[a, b], x0);
    let mut c4 = T::zero();
    for axis in 0..2 {
        let p = |k: usize| if axis == 0 { c(k, 0) } else { c(0, k) };
        let (d1, d2, d3, d4) = (p(1)?, p(2)?, p(3)?, p(4)?);
        c4 = c4 - d4 / T::c(12.0) + d1 * d3 + T::c(0.75) * d2 * d2 - T::c(6.0) * d1 * d1 * d2
            + T::c(5.0) * d1.powi(4);
    }
    let (c1, c2_) = (c(1, 0)?, c(0, 1)?);
    let (c11, c12, c22) = (c(2, 0)?, c(1, 1)?, c(0, 2)?);
    let (c112, c122, c1122) = (c(2, 1)?, c(1, 2)?, c(2, 2)?);
    let cc2 = T::c(30.0) * c1 * c1 * c2_ * c2_ - T::c(6.0) * c1 * c1 * c22 - T::c(6.0) * c2_ * c2_ * c11
        - T::c(24.0) * c1 * c2_ * c12
        + T::c(3.0) * c1 * c122
        + T::c(3.0) * c2_ * c112
        + T::c(1.5) * c11 * c22
        + T::c(3.0) * c12 * c12
        - T::c(0.5) * c1122;
    Ok((c4, cc2))
}

/// Planar closed form of `∫A`: `V₄(2,γ) C₄ + V₂(2,γ) C₂`.
pub fn a_integral_closed_2d<T: Scalar>(model: &IntensityModel<T>, x0: &[T], gamma: T) -> Result<T, AsymptoticsError> {
    let (c4, c2) = planar_constants(model, x0)?;
    let kernel = KernelSpec::new(2, gamma)?;
    check_adaptive_gamma(&kernel)?;
    let m = kernel.moments();
    Ok(m.v4 * c4 + m.v2()? * c2)
}

/// `n^{-1/(d+8)} (d Q / (8 λ(x₀) (∫A)²))^{1/(d+8)}` from plain values.
pub fn h_star_adaptive_from_values<T: Scalar>(kernel: &KernelSpec<T>, lambda: T, a_int: T, n: usize) -> BandwidthResult<T> {
    let d = kernel.dim();
    let constant = T::from_usize_(d) * kernel.moments().q / (T::c(8.0) * lambda * a_int * a_int);
    BandwidthResult::from_constant(constant, n, 8, d)
}

pub fn h_star_adaptive<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    n: usize,
    opts: QuadOptions,
) -> Result<BandwidthResult<T>, AsymptoticsError> {
    let lambda = model.intensity_at(x0)?;
    let a = if model.is_constant() {
        check_dims(model, kernel)?;
        check_adaptive_gamma(kernel)?;
        T::zero()
    } else {
        a_integral(model, kernel, x0, opts)?
    };
    Ok(h_star_adaptive_from_values(kernel, lambda, a, n))
}

pub fn expansion_terms_adaptive<T: Scalar>(
    model: &IntensityModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    n: usize,
    h: T,
    opts: QuadOptions,
) -> Result<ExpansionTerms<T>, AsymptoticsError> {
    let var_leading = var_leading(model, kernel, x0, n, h)?;
    let a_int = a_integral(model, kernel, x0, opts)?;
    let (c4, c2) = if kernel.dim() == 2 {
        let (a, b) = planar_constants(model, x0)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let bias_leading = model.intensity_at(x0)? * h.powi(4) * a_int;
    Ok(ExpansionTerms {
        bias_leading,
        var_leading,
        amse: bias_leading * bias_leading + var_leading,
        a_integral: Some(a_int),
        c4,
        c2,
    })
}

/// Richardson extrapolation to `h → 0` of values `f(h₀), f(h₀/r), f(h₀/r²), …`
/// whose error expands in the powers `h^{orders[0]}, h^{orders[1]}, …`.
/// Uses `values.len() - 1` of the orders.
pub fn richardson<T: Scalar>(values: &[T], ratio: T, orders: &[i32]) -> T {
    assert!(!values.is_empty() && orders.len() + 1 >= values.len());
    let mut row = values.to_vec();
    for &p in orders.iter().take(values.len() - 1) {
        let f = ratio.powi(p);
        row = row.windows(2).map(|w| (f * w[1] - w[0]) / (f - T::one())).collect();
    }
    row[0]
}
