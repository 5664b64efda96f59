//! Experiment campaigns over `(x₀, n, h)` grids, driven by
//! [`ExperimentConfig`], with deterministic CSV and JSON output.

mod bias_variance;
mod config;
mod identities;
mod op_check;
mod output;
mod rate;

use thiserror::Error;

pub use bias_variance::{run_bias_variance_experiment, BiasVarianceRecord, BiasVarianceReport};
pub use config::{
    BandwidthRule, ConfigError, EstimatorSpec, ExperimentConfig, ProcessSpec, RateBackend, RateOptions, SamplerKind,
};
pub use identities::{
    run_identity_suite, IdentityCheck, IdentityMutation, IdentityReport, IdentitySuiteOptions, Tolerance,
    IBP_ABS_TOL, MOMENT_REL_TOL, Q_PLANAR_REL_TOL,
};
pub use op_check::{run_op_check, OpCheckReport, OpCheckRow, QuantileEstimate, OP_QUANTILES};
pub use output::{export_plot_data, theory_table, with_threads, write_csv, write_summary, Summary, TheoryRow};
pub use rate::{argmin_log_grid, ols_fit, run_rate_experiment, ArgminResult, OlsFit, RateFit, RateRecord, RateReport};

use crate::asymptotics::{
    a_integral, bias_leading_fixed, h_star_adaptive, h_star_fixed, var_leading, AsymptoticsError, ADAPTIVE_MIN_GAMMA,
};
use crate::estimate::{EstimateError, EstimateRequest, EstimatorMode, WeightSource};
use crate::model::{AbramsonWeight, ModelError};
use crate::oracle::{exact_moments_adaptive, exact_moments_fixed, MomentReport, OracleError, OracleOptions, SamplerConfig};
use crate::quadrature::QuadOptions;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("degenerate optimal bandwidth at x0 {x0:?}: {reason}")]
    Degenerate { x0: Vec<f64>, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

/// Per-`x₀` quantities shared by all runners.
pub(crate) struct Site<'a> {
    pub config: &'a ExperimentConfig,
    pub index: usize,
    pub x0: Vec<f64>,
    pub lambda0: f64,
    pub weight: Option<AbramsonWeight<f64>>,
    /// Smallest bandwidth multiplier, so the estimator reaches `h / c_min`.
    pub c_min: f64,
    /// `∫A(u; x₀) du` when the adaptive expansion applies.
    pub a_integral: Option<f64>,
}

pub(crate) fn theory_quad() -> QuadOptions {
    QuadOptions {
        tol: 1e-10,
        min_level: 0,
        max_level: 6,
    }
}

impl<'a> Site<'a> {
    pub fn new(config: &'a ExperimentConfig, index: usize) -> Result<Self, ExperimentError> {
        let x0 = config.x0[index].clone();
        let model = &config.model;
        let lambda0 = model.intensity_at(&x0)?;
        let adaptive = config.estimator.is_adaptive();
        let weight = if adaptive {
            Some(AbramsonWeight::new(model.clone(), x0.clone())?)
        } else {
            None
        };
        let c_min = match (&config.estimator, &weight) {
            (EstimatorSpec::AdaptiveOracle, Some(w)) => w.min_on_window().min(1.0),
            _ => 1.0,
        };
        let a = if adaptive && config.kernel.gamma() > ADAPTIVE_MIN_GAMMA {
            Some(if model.is_constant() {
                0.0
            } else {
                a_integral(model, &config.kernel, &x0, theory_quad())?
            })
        } else {
            None
        };
        Ok(Self {
            config,
            index,
            x0,
            lambda0,
            weight,
            c_min,
            a_integral: a,
        })
    }

    pub fn all(config: &'a ExperimentConfig) -> Result<Vec<Self>, ExperimentError> {
        (0..config.x0.len()).map(|i| Self::new(config, i)).collect()
    }

    pub fn x0_label(&self) -> String {
        self.x0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    }

    /// Largest bandwidth whose kernel reach stays inside the window.
    pub fn h_max(&self) -> f64 {
        0.999 * self.config.model.window().boundary_distance(&self.x0) * self.c_min
    }

    pub fn request(&self, h: f64) -> EstimateRequest<f64> {
        let c = self.config;
        let base = EstimateRequest::fixed(self.x0.clone(), h, c.kernel);
        match c.estimator {
            EstimatorSpec::Fixed => base,
            EstimatorSpec::AdaptiveOracle => EstimateRequest::oracle(self.x0.clone(), h, c.kernel, c.model.clone()),
            EstimatorSpec::AdaptivePilot { bandwidth, floor } => EstimateRequest {
                mode: EstimatorMode::Adaptive(WeightSource::Pilot { bandwidth, floor }),
                ..base
            },
        }
    }

    pub fn sampler(&self, n: usize) -> SamplerConfig<f64> {
        let c = self.config;
        match c.process {
            ProcessSpec::Thomas {
                parent_intensity,
                offspring_mean,
                sigma,
            } => SamplerConfig::Thomas {
                parent_intensity,
                offspring_mean,
                sigma,
                window: c.model.window().clone(),
                n,
            },
            ProcessSpec::Poisson => match c.sampler {
                SamplerKind::Local => SamplerConfig::PoissonLocal {
                    model: c.model.clone(),
                    n,
                },
                SamplerKind::Full => SamplerConfig::Poisson {
                    model: c.model.clone(),
                    n,
                },
            },
        }
    }

    /// Exact moments, unless the estimator uses pilot weights.
    pub fn oracle(&self, n: usize, h: f64) -> Result<Option<MomentReport<f64>>, ExperimentError> {
        let c = self.config;
        let pcm = c.pair_correlation();
        let opts = OracleOptions::default();
        Ok(match (&c.estimator, &self.weight) {
            (EstimatorSpec::Fixed, _) => Some(exact_moments_fixed(&c.model, &pcm, &c.kernel, &self.x0, h, n, &opts)?),
            (EstimatorSpec::AdaptiveOracle, Some(w)) => Some(exact_moments_adaptive(w, &pcm, &c.kernel, h, n, &opts)?),
            _ => None,
        })
    }

    /// Leading bias term, when the expansion is available.
    pub fn bias_leading(&self, h: f64) -> Result<Option<f64>, ExperimentError> {
        let c = self.config;
        Ok(if c.estimator.is_adaptive() {
            self.a_integral.map(|a| self.lambda0 * h.powi(4) * a)
        } else {
            Some(bias_leading_fixed(&c.model, &c.kernel, &self.x0, h)?)
        })
    }

    pub fn var_leading(&self, n: usize, h: f64) -> Result<f64, ExperimentError> {
        Ok(var_leading(&self.config.model, &self.config.kernel, &self.x0, n, h)?)
    }

    /// The formula optimum matching the estimator.
    pub fn h_star(&self, n: usize) -> Result<Option<f64>, ExperimentError> {
        let c = self.config;
        Ok(if c.estimator.is_adaptive() {
            if c.kernel.gamma() <= ADAPTIVE_MIN_GAMMA {
                None
            } else {
                h_star_adaptive(&c.model, &c.kernel, &self.x0, n, theory_quad())?.h_star
            }
        } else {
            h_star_fixed(&c.model, &c.kernel, &self.x0, n)?.h_star
        })
    }

    pub fn degenerate(&self, reason: impl Into<String>) -> ExperimentError {
        ExperimentError::Degenerate {
            x0: self.x0.clone(),
            reason: reason.into(),
        }
    }

    /// Bandwidths of the grid at this site and `n`.
    pub fn bandwidths(&self, n: usize) -> Result<Vec<f64>, ExperimentError> {
        let c = self.config;
        let hs = match &c.bandwidth {
            BandwidthRule::Explicit(v) => v.clone(),
            BandwidthRule::Power { scale, exponent } => vec![scale * (n as f64).powf(*exponent)],
            BandwidthRule::HStarFixed => {
                let r = h_star_fixed(&c.model, &c.kernel, &self.x0, n)?;
                vec![r.h_star.ok_or_else(|| self.degenerate("zero Laplacian"))?]
            }
            BandwidthRule::HStarAdaptive => {
                let r = h_star_adaptive(&c.model, &c.kernel, &self.x0, n, theory_quad())?;
                vec![r.h_star.ok_or_else(|| self.degenerate("zero integral of A"))?]
            }
            BandwidthRule::MseArgmin => {
                let r = argmin_log_grid(c.rate.h_min, self.h_max(), c.rate.grid_points, |h| {
                    self.oracle(n, h)?
                        .map(|m| m.mse)
                        .ok_or_else(|| ExperimentError::Invalid("mse_argmin needs exact moments; pilot weights have none".into()))
                })?;
                vec![r.h]
            }
        };
        let h_max = self.h_max() / 0.999;
        if let Some(h) = hs.iter().find(|&&h| !(h > 0.0) || h >= h_max) {
            return Err(ExperimentError::Invalid(format!(
                "bandwidth {h} at x0 {:?}, n = {n} reaches outside the window (limit {h_max})",
                self.x0
            )));
        }
        Ok(hs)
    }
}

/// Requests for every configured bandwidth at `x0` number `index` (or for
/// `h` alone), paired with their bandwidth.
pub fn estimate_requests(
    config: &ExperimentConfig,
    index: usize,
    n: usize,
    h: Option<f64>,
) -> Result<Vec<(f64, EstimateRequest<f64>)>, ExperimentError> {
    if index >= config.x0.len() {
        return Err(ExperimentError::Invalid(format!("no x0 with index {index}")));
    }
    let site = Site::new(config, index)?;
    let hs = match h {
        Some(h) => vec![h],
        None => site.bandwidths(n)?,
    };
    Ok(hs.into_iter().map(|h| (h, site.request(h))).collect())
}
