use serde::Serialize;

use super::{EstimatorSpec, ExperimentConfig, ExperimentError, ProcessSpec, Site};
use crate::oracle::mc_estimates;
use crate::simulate::RngStream;

/// Probabilities of the reported `|Z|` quantiles.
pub const OP_QUANTILES: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileEstimate {
    pub p: f64,
    pub value: f64,
    /// Half the width of the order-statistic band `±√(Rp(1−p))`.
    pub se: f64,
}

/// Empirical `p`-quantile of sorted data with its order-statistic s.e.
fn quantile(sorted: &[f64], p: f64) -> QuantileEstimate {
    let r = sorted.len() as f64;
    let at = |k: f64| sorted[(k.max(1.0) as usize).min(sorted.len()) - 1];
    let m = (r * p * (1.0 - p)).sqrt();
    QuantileEstimate {
        p,
        value: at((r * p).ceil()),
        se: 0.5 * (at((r * p + m).ceil()) - at((r * p - m).floor())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCheckRow {
    pub x0_index: usize,
    pub x0: String,
    pub n: usize,
    pub h: f64,
    pub replicates: usize,
    /// Leading bias subtracted before standardising.
    pub predicted_bias: f64,
    pub z_mean: f64,
    pub z_mean_se: f64,
    pub z_median: f64,
    pub z_variance: f64,
    pub z_variance_se: f64,
    pub abs_z_quantiles: Vec<QuantileEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpCheckReport {
    pub rows: Vec<OpCheckRow>,
    /// Per `x₀`: every `|Z|` quantile agrees between consecutive `n` within
    /// three combined standard errors.
    pub stable: Vec<bool>,
    /// Per `x₀`, for Poisson fixed-bandwidth runs: `Var(Z) ∈ [0.9, 1.1]` at
    /// every `n`.
    pub unit_variance: Vec<Option<bool>>,
}

impl OpCheckReport {
    pub fn all_stable(&self) -> bool {
        self.stable.iter().all(|&s| s)
    }

    pub fn all_unit_variance(&self) -> bool {
        self.unit_variance.iter().all(|v| v.unwrap_or(true))
    }
}

/// Standardised deviations `Z = (λ̂ − λ(x₀) − bias) / √(λ(x₀)Q/(n hᵈ))` over
/// the configured replicates, summarised per `(x₀, n)`.
pub fn run_op_check(config: &ExperimentConfig) -> Result<OpCheckReport, ExperimentError> {
    if config.replicates < 500 {
        return Err(ExperimentError::Invalid(format!(
            "op-check needs at least 500 replicates, got {}",
            config.replicates
        )));
    }
    let sites = Site::all(config)?;
    let mut rows = Vec::new();
    let mut stable = Vec::new();
    let mut unit_variance = Vec::new();
    let mut k = 0u64;
    let poisson_fixed = config.process == ProcessSpec::Poisson && config.estimator == EstimatorSpec::Fixed;
    for site in &sites {
        let start = rows.len();
        for &n in &config.n {
            let hs = site.bandwidths(n)?;
            let h = hs[0];
            let rng = RngStream::new(config.seed, k);
            k += 1;
            let values = mc_estimates(&site.sampler(n), &site.request(h), config.replicates, rng)?;
            let bias = site.bias_leading(h)?.unwrap_or(0.0);
            let scale = site.var_leading(n, h)?.sqrt();
            let z: Vec<f64> = values.iter().map(|v| (v - site.lambda0 - bias) / scale).collect();
            let summary = crate::oracle::summarise_replicates(&z, 0.0)?;
            let se = summary.standard_errors.expect("Monte Carlo report");
            let mut sorted = z.clone();
            sorted.sort_by(f64::total_cmp);
            let median = quantile(&sorted, 0.5).value;
            let mut abs: Vec<f64> = z.iter().map(|v| v.abs()).collect();
            abs.sort_by(f64::total_cmp);
            rows.push(OpCheckRow {
                x0_index: site.index,
                x0: site.x0_label(),
                n,
                h,
                replicates: config.replicates,
                predicted_bias: bias,
                z_mean: summary.mean,
                z_mean_se: se.mean,
                z_median: median,
                z_variance: summary.variance,
                z_variance_se: se.variance,
                abs_z_quantiles: OP_QUANTILES.iter().map(|&p| quantile(&abs, p)).collect(),
            });
        }
        let mine = &rows[start..];
        stable.push(mine.windows(2).all(|w| {
            w[0].abs_z_quantiles.iter().zip(&w[1].abs_z_quantiles).all(|(a, b)| {
                (a.value - b.value).abs() <= 3.0 * (a.se * a.se + b.se * b.se).sqrt()
            })
        }));
        unit_variance.push(poisson_fixed.then(|| mine.iter().all(|r| (0.9..=1.1).contains(&r.z_variance))));
    }
    Ok(OpCheckReport {
        rows,
        stable,
        unit_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_a_uniform_ladder() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let q = quantile(&v, 0.9);
        assert_eq!(q.value, 900.0);
        // m = √90 ≈ 9.49: order statistics 910 and 890
        assert_eq!(q.se, 10.0);
        assert_eq!(quantile(&v, 0.5).value, 500.0);
    }
}
