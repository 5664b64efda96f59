//! Exact finite-sample moments of both estimators by quadrature, and their
//! Monte Carlo counterparts.
//!
//! With `x = x₀ + h w`, a weight `c` (identically one for the fixed
//! estimator) and `K(w) = c(x)^d κ(w c(x))`, the moments of the estimator on
//! `Y_n` are
//!
//! ```text
//! mean     = ∫ K(w) λ(x) dw
//! variance = (1/(n h^d)) ∫ c(x)^d K(w)² λ(x) dw
//!          + (1/n) ∫∫ K(w) K(z) λ(x) λ(y) (g(x, y) - 1) dw dz
//! ```
//!
//! over the star-shaped support `{w : |w| c(x₀ + h w) ≤ 1}`. The mean is
//! evaluated as `λ(x₀) + ∫K(λ - λ(x₀)c²) + λ(x₀)(∫c²K - 1)`; both integrals
//! are small when the bias is, which keeps `h⁴`-sized adaptive biases
//! resolvable.

use rayon::prelude::*;
use thiserror::Error;

use crate::estimate::{estimate_pooled, EstimateError, EstimateRequest, EstimatorMode, WeightSource};
use crate::kernel::{KernelError, KernelSpec};
use crate::model::{AbramsonWeight, IntensityModel, ModelError, PairCorrelationModel, Window};
use crate::quadrature::{refine, refine_each, QuadOptions, QuadratureError, StarRule};
use crate::scalar::{CompensatedSum, Scalar};
use crate::simulate::{
    sample_superposition, sample_thomas, sample_union_poisson_local, PointPattern, RngStream, SimulateError,
    SuperposedSample,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("ball of radius {radius} around x0 is not inside the window (boundary distance {distance})")]
    BallNotContained { radius: f64, distance: f64 },
    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

/// Quadrature tolerances of the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Relative tolerance of the single integrals.
    pub tol: f64,
    /// Tolerance of the two mean components, relative to `max(1, |·|)`.
    pub mean_tol: f64,
    /// Relative tolerance of the double `(g - 1)` integral.
    pub pair_tol: f64,
    pub max_level: usize,
    pub pair_max_level: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            mean_tol: 1e-13,
            pair_tol: 1e-7,
            max_level: 6,
            pair_max_level: 3,
        }
    }
}

impl OracleOptions {
    pub fn for_scalar<T: Scalar>() -> Self {
        Self {
            tol: T::QUAD_TOL,
            mean_tol: T::QUAD_TOL * 1e-3,
            pair_tol: T::QUAD_TOL_DOUBLE,
            ..Self::default()
        }
    }
}

/// Monte Carlo standard errors of the reported moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardErrors<T> {
    pub mean: T,
    pub variance: T,
    pub mse: T,
    pub replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport<T> {
    pub mean: T,
    pub second_moment: T,
    pub variance: T,
    pub mse: T,
    /// `mean - λ(x₀)`.
    pub bias: T,
    /// Variance contribution of the single integral (the Poisson part).
    pub variance_single: T,
    /// Variance contribution of the `(g - 1)` double integral.
    pub variance_pair: T,
    /// Largest absolute change over the last quadrature refinement; zero for
    /// Monte Carlo reports.
    pub quadrature_error_estimate: T,
    pub standard_errors: Option<StandardErrors<T>>,
}

impl<T: Scalar> MomentReport<T> {
    fn from_parts(truth: T, bias: T, single: T, pair: T, quad_err: T) -> Self {
        let mean = truth + bias;
        let variance = single + pair;
        Self {
            mean,
            second_moment: variance + mean * mean,
            variance,
            mse: bias * bias + variance,
            bias,
            variance_single: single,
            variance_pair: pair,
            quadrature_error_estimate: quad_err,
            standard_errors: None,
        }
    }
}

/// Radius of the star support along `omega`: the root of `r c(x₀ + h r ω) = 1`
/// in `(0, r_max]`, by the Illinois variant of regula falsi.
fn star_radius<T: Scalar, C: Fn(&[T]) -> T>(weight: &C, x0: &[T], h: T, omega: &[T], r_max: T) -> T {
    let mut x = vec![T::zero(); x0.len()];
    let mut f = |r: T| {
        for ((xi, &a), &o) in x.iter_mut().zip(x0).zip(omega) {
            *xi = a + h * r * o;
        }
        r * weight(&x) - T::one()
    };
    let r0 = weight(x0).recip();
    let f0 = f(r0);
    if f0 == T::zero() {
        return r0;
    }
    let (mut lo, mut flo, mut hi, mut fhi) = if f0 < T::zero() {
        (r0, f0, r_max, f(r_max))
    } else {
        (T::zero(), -T::one(), r0, f0)
    };
    if fhi <= T::zero() {
        return hi;
    }
    let eps = T::epsilon() * T::c(4.0);
    let mut side = 0i8;
    for _ in 0..200 {
        let r = (lo * fhi - hi * flo) / (fhi - flo);
        let fr = f(r);
        if fr == T::zero() || (hi - lo) <= eps * hi {
            return r;
        }
        if fr < T::zero() {
            lo = r;
            flo = fr;
            if side == -1 {
                fhi = fhi * T::c(0.5);
            }
            side = -1;
        } else {
            hi = r;
            fhi = fr;
            if side == 1 {
                flo = flo * T::c(0.5);
            }
            side = 1;
        }
    }
    T::c(0.5) * (lo + hi)
}

struct Integrands<'a, T, C> {
    model: &'a IntensityModel<T>,
    kernel: &'a KernelSpec<T>,
    x0: &'a [T],
    h: T,
    weight: C,
    r_max: T,
    lambda0: T,
}

impl<'a, T: Scalar, C: Fn(&[T]) -> T + Sync> Integrands<'a, T, C> {
    fn rule(&self, level: usize) -> Result<StarRule<T>, QuadratureError> {
        StarRule::star(self.kernel.dim(), level, |omega: &[T]| {
            star_radius(&self.weight, self.x0, self.h, omega, self.r_max)
        })
    }

    /// `(x, c(x), K(w))` at a rule node.
    #[inline]
    fn node(&self, eval: &crate::kernel::KernelEval<T>, w: &[T], x: &mut [T]) -> (T, T) {
        for ((xi, &a), &wi) in x.iter_mut().zip(self.x0).zip(w) {
            *xi = a + self.h * wi;
        }
        let c = (self.weight)(x);
        let r2 = w.iter().fold(T::zero(), |acc, &v| acc + v * v) * c * c;
        let k = c.powi(self.kernel.dim() as i32) * eval.at_sq_norm(r2);
        (c, k)
    }

    /// `[∫K(λ/λ₀ - c²), ∫c²K - 1, ∫c^d K² λ]` at one level; the first two are
    /// relative to `λ₀` so their tolerance does not depend on its scale.
    fn singles(&self, level: usize) -> Result<[T; 3], QuadratureError> {
        let rule = self.rule(level)?;
        let eval = self.kernel.evaluator();
        let d = self.kernel.dim();
        let mut x = vec![T::zero(); d];
        let inv = self.lambda0.recip();
        let [a, b, s] = rule.integrate(|w| {
            let (c, k) = self.node(&eval, w, &mut x);
            let lam = self.model.value(&x);
            let c2 = c * c;
            [k * (lam * inv - c2), c2 * k, c.powi(d as i32) * k * k * lam]
        });
        Ok([a, b - T::one(), s])
    }

    /// `∫∫ K(w)K(z) λ(x)λ(y) (g(x,y) - 1)` at one level.
    fn pair(&self, pcm: &PairCorrelationModel<T>, level: usize) -> Result<[T; 1], QuadratureError> {
        let rule = self.rule(level)?;
        let eval = self.kernel.evaluator();
        let d = self.kernel.dim();
        let mut x = vec![T::zero(); d];
        let mut positions = Vec::with_capacity(rule.len() * d);
        let mut amplitudes = Vec::with_capacity(rule.len());
        for (w, wt) in rule.nodes() {
            let (_, k) = self.node(&eval, w, &mut x);
            positions.extend_from_slice(&x);
            amplitudes.push(wt * k * self.model.value(&x));
        }
        let rows: Vec<T> = positions
            .par_chunks_exact(d)
            .zip(amplitudes.par_iter())
            .map(|(u, &au)| {
                let mut acc = CompensatedSum::new();
                for (v, &av) in positions.chunks_exact(d).zip(&amplitudes) {
                    acc.add(av * pcm.excess(u, v));
                }
                au * acc.value()
            })
            .collect();
        Ok([rows.into_iter().collect::<CompensatedSum<T>>().value()])
    }
}

#[allow(clippy::too_many_arguments)]
fn moments_core<T, C>(
    model: &IntensityModel<T>,
    pcm: &PairCorrelationModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    h: T,
    n: usize,
    weight: C,
    c_min: T,
    opts: &OracleOptions,
) -> Result<MomentReport<T>, OracleError>
where
    T: Scalar,
    C: Fn(&[T]) -> T + Sync,
{
    let d = kernel.dim();
    if model.dim() != d {
        return Err(OracleError::InvalidArgument {
            name: "kernel",
            reason: format!("kernel dimension {d} does not match model dimension {}", model.dim()),
        });
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(OracleError::InvalidArgument {
            name: "h",
            reason: format!("must be positive and finite, got {h}"),
        });
    }
    if n == 0 {
        return Err(OracleError::InvalidArgument {
            name: "n",
            reason: "must be at least 1".into(),
        });
    }
    pcm.check_dimension(d)?;
    model.window().check_point(x0, "x0")?;
    let radius = h / c_min;
    if !model.window().contains_ball(x0, radius) {
        return Err(OracleError::BallNotContained {
            radius: radius.to_f64_(),
            distance: model.window().boundary_distance(x0).to_f64_(),
        });
    }
    let lambda0 = model.value(x0);
    let parts = Integrands {
        model,
        kernel,
        x0,
        h,
        weight,
        r_max: c_min.recip(),
        lambda0,
    };
    let qopts = QuadOptions {
        tol: opts.tol,
        min_level: 0,
        max_level: opts.max_level,
    };
    let singles = refine_each(qopts, [opts.mean_tol, opts.mean_tol, opts.tol], |level| parts.singles(level))?;
    let [a, b, s] = singles.values;
    let nf = T::from_usize_(n);
    let bias = lambda0 * (a + b);
    let single = s / (nf * h.powi(d as i32));
    let mut quad_err = singles.error;
    let pair = if pcm.is_poisson() {
        T::zero()
    } else {
        let popts = QuadOptions {
            tol: opts.pair_tol,
            min_level: 0,
            max_level: opts.pair_max_level,
        };
        let r = refine(popts, |level| parts.pair(pcm, level))?;
        quad_err = quad_err.max(r.error / nf);
        r.values[0] / nf
    };
    Ok(MomentReport::from_parts(lambda0, bias, single, pair, quad_err))
}

/// Exact moments of the fixed-bandwidth estimator on `Y_n`.
#[allow(clippy::too_many_arguments)]
pub fn exact_moments_fixed<T: Scalar>(
    model: &IntensityModel<T>,
    pcm: &PairCorrelationModel<T>,
    kernel: &KernelSpec<T>,
    x0: &[T],
    h: T,
    n: usize,
    opts: &OracleOptions,
) -> Result<MomentReport<T>, OracleError> {
    moments_core(model, pcm, kernel, x0, h, n, |_: &[T]| T::one(), T::one(), opts)
}

/// Exact moments of the adaptive estimator with oracle Abramson weights
/// anchored at `weight.anchor()`.
pub fn exact_moments_adaptive<T: Scalar>(
    weight: &AbramsonWeight<T>,
    pcm: &PairCorrelationModel<T>,
    kernel: &KernelSpec<T>,
    h: T,
    n: usize,
    opts: &OracleOptions,
) -> Result<MomentReport<T>, OracleError> {
    let c_min = weight.min_on_window().min(T::one());
    moments_core(
        weight.model(),
        pcm,
        kernel,
        weight.anchor(),
        h,
        n,
        |x: &[T]| weight.value(x),
        c_min,
        opts,
    )
}

/// How Monte Carlo replicates of `Y_n` are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig<T> {
    /// `n` Poisson replicates on the whole window.
    Poisson { model: IntensityModel<T>, n: usize },
    /// The union of `n` Poisson replicates drawn only on the cube around
    /// `x₀` that can reach the estimator; falls back to whole-window
    /// sampling for pilot-weighted requests.
    PoissonLocal { model: IntensityModel<T>, n: usize },
    /// `n` planar Thomas replicates.
    Thomas {
        parent_intensity: T,
        offspring_mean: T,
        sigma: T,
        window: Window<T>,
        n: usize,
    },
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn n(&self) -> usize {
        match self {
            Self::Poisson { n, .. } | Self::PoissonLocal { n, .. } | Self::Thomas { n, .. } => *n,
        }
    }

    /// `λ(x)` of the sampled process.
    pub fn intensity(&self, x: &[T]) -> T {
        match self {
            Self::Poisson { model, .. } | Self::PoissonLocal { model, .. } => model.value(x),
            Self::Thomas {
                parent_intensity,
                offspring_mean,
                ..
            } => *parent_intensity * *offspring_mean,
        }
    }

    pub fn window(&self) -> &Window<T> {
        match self {
            Self::Poisson { model, .. } | Self::PoissonLocal { model, .. } => model.window(),
            Self::Thomas { window, .. } => window,
        }
    }

    /// One realisation of `Y_n` as a pooled pattern.
    pub fn sample(&self, req: &EstimateRequest<T>, rng: RngStream) -> Result<PointPattern<T>, OracleError> {
        let n = self.n();
        Ok(match self {
            Self::Poisson { model, .. } => sample_superposition(model, n, rng)?.union(),
            Self::PoissonLocal { model, .. } => {
                let reach = match &req.mode {
                    EstimatorMode::Fixed => Some(req.h),
                    EstimatorMode::Adaptive(WeightSource::Oracle(m)) => {
                        let w = AbramsonWeight::new(m.clone(), req.x0.clone())?;
                        Some(req.h / w.min_on_window())
                    }
                    EstimatorMode::Adaptive(WeightSource::Pilot { .. }) => None,
                };
                match reach {
                    Some(r) => sample_union_poisson_local(model, n, &req.x0, r * T::c(1.0 + 1e-6), rng)?,
                    None => sample_superposition(model, n, rng)?.union(),
                }
            }
            Self::Thomas {
                parent_intensity,
                offspring_mean,
                sigma,
                window,
                ..
            } => {
                let reps = (0..n as u64)
                    .map(|i| sample_thomas(*parent_intensity, *offspring_mean, *sigma, window, rng.child(n as u64, i)))
                    .collect::<Result<Vec<_>, _>>()?;
                SuperposedSample::new(reps)?.union()
            }
        })
    }
}

/// Empirical moments of `values` about `truth`, with standard errors.
pub fn summarise_replicates<T: Scalar>(values: &[T], truth: T) -> Result<MomentReport<T>, OracleError> {
    let r = values.len();
    if r < 2 {
        return Err(OracleError::InvalidArgument {
            name: "replicates",
            reason: format!("need at least 2, got {r}"),
        });
    }
    let rf = r as f64;
    let v: Vec<f64> = values.iter().map(|x| x.to_f64_()).collect();
    let t = truth.to_f64_();
    let mean = v.iter().copied().collect::<CompensatedSum<f64>>().value() / rf;
    let dev = |p: i32| v.iter().map(|x| (x - mean).powi(p)).collect::<CompensatedSum<f64>>().value() / rf;
    let m2 = dev(2);
    let m4 = dev(4);
    let variance = m2 * rf / (rf - 1.0);
    let sq: Vec<f64> = v.iter().map(|x| (x - t) * (x - t)).collect();
    let mse = sq.iter().copied().collect::<CompensatedSum<f64>>().value() / rf;
    let mse_var = sq.iter().map(|s| (s - mse).powi(2)).collect::<CompensatedSum<f64>>().value() / (rf - 1.0);
    let var_of_var = ((m4 - variance * variance * (rf - 3.0) / (rf - 1.0)) / rf).max(0.0);
    let bias = mean - t;
    Ok(MomentReport {
        mean: T::c(mean),
        second_moment: T::c(variance + mean * mean),
        variance: T::c(variance),
        mse: T::c(mse),
        bias: T::c(bias),
        variance_single: T::c(variance),
        variance_pair: T::zero(),
        quadrature_error_estimate: T::zero(),
        standard_errors: Some(StandardErrors {
            mean: T::c((variance / rf).sqrt()),
            variance: T::c(var_of_var.sqrt()),
            mse: T::c((mse_var / rf).sqrt()),
            replicates: r,
        }),
    })
}

/// `R` independent estimates on streams `rng.child(R, r)`, in replicate order.
pub fn mc_estimates<T: Scalar>(
    sampler: &SamplerConfig<T>,
    req: &EstimateRequest<T>,
    replicates: usize,
    rng: RngStream,
) -> Result<Vec<T>, OracleError> {
    let n = sampler.n();
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let pattern = sampler.sample(req, rng.child(replicates as u64, r))?;
            Ok(estimate_pooled(&pattern, n, req)?)
        })
        .collect()
}

/// Monte Carlo moments of the requested estimator over `R` replicates of `Y_n`.
pub fn mc_moments<T: Scalar>(
    sampler: &SamplerConfig<T>,
    req: &EstimateRequest<T>,
    replicates: usize,
    rng: RngStream,
) -> Result<MomentReport<T>, OracleError> {
    if replicates < 2 {
        return Err(OracleError::InvalidArgument {
            name: "replicates",
            reason: format!("need at least 2, got {replicates}"),
        });
    }
    sampler.window().check_point(&req.x0, "x0")?;
    let values = mc_estimates(sampler, req, replicates, rng)?;
    summarise_replicates(&values, sampler.intensity(&req.x0))
}
