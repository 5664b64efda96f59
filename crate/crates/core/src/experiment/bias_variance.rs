use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, ExperimentError, Site};
use crate::oracle::mc_moments;
use crate::simulate::RngStream;

/// One `(x₀, n, h)` grid point. Columns without a value (no exact moments
/// for pilot weights, no expansion for `γ ≤ 5` adaptive kernels) are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVarianceRecord {
    pub x0_index: usize,
    /// Coordinates separated by spaces.
    pub x0: String,
    pub n: usize,
    pub h: f64,
    pub estimator: &'static str,
    pub lambda0: f64,
    pub replicates: usize,
    pub mc_mean: f64,
    pub mc_mean_se: f64,
    pub mc_bias: f64,
    pub mc_variance: f64,
    pub mc_variance_se: f64,
    pub mc_mse: f64,
    pub oracle_mean: Option<f64>,
    pub oracle_bias: Option<f64>,
    pub oracle_variance: Option<f64>,
    pub oracle_variance_single: Option<f64>,
    pub oracle_variance_pair: Option<f64>,
    pub oracle_mse: Option<f64>,
    pub bias_leading: Option<f64>,
    pub var_leading: f64,
    /// Bias over its leading term, or over `λ(x₀)` when that term is zero.
    pub bias_ratio: Option<f64>,
    pub variance_ratio: f64,
    /// `(MC − oracle) / MC s.e.` for the mean and variance.
    pub mean_z: Option<f64>,
    pub variance_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasVarianceReport {
    pub records: Vec<BiasVarianceRecord>,
}

impl BiasVarianceReport {
    /// MC mean and variance within `k` standard errors of the exact values
    /// wherever both exist.
    pub fn mc_consistent(&self, k: f64) -> bool {
        self.records.iter().all(|r| {
            r.mean_z.is_none_or(|z| z.abs() <= k) && r.variance_z.is_none_or(|z| z.abs() <= k)
        })
    }
}

fn record(config: &ExperimentConfig, site: &Site<'_>, n: usize, h: f64, rng: RngStream) -> Result<BiasVarianceRecord, ExperimentError> {
    let req = site.request(h);
    let mc = mc_moments(&site.sampler(n), &req, config.replicates, rng)?;
    let se = mc.standard_errors.expect("Monte Carlo report");
    let oracle = site.oracle(n, h)?;
    let bias_leading = site.bias_leading(h)?;
    let var_leading = site.var_leading(n, h)?;
    let bias = oracle.map_or(mc.bias, |o| o.bias);
    let variance = oracle.map_or(mc.variance, |o| o.variance);
    let bias_ratio = bias_leading.map(|b| if b != 0.0 { bias / b } else { bias / site.lambda0 });
    Ok(BiasVarianceRecord {
        x0_index: site.index,
        x0: site.x0_label(),
        n,
        h,
        estimator: config.estimator.label(),
        lambda0: site.lambda0,
        replicates: config.replicates,
        mc_mean: mc.mean,
        mc_mean_se: se.mean,
        mc_bias: mc.bias,
        mc_variance: mc.variance,
        mc_variance_se: se.variance,
        mc_mse: mc.mse,
        oracle_mean: oracle.map(|o| o.mean),
        oracle_bias: oracle.map(|o| o.bias),
        oracle_variance: oracle.map(|o| o.variance),
        oracle_variance_single: oracle.map(|o| o.variance_single),
        oracle_variance_pair: oracle.map(|o| o.variance_pair),
        oracle_mse: oracle.map(|o| o.mse),
        bias_leading,
        var_leading,
        bias_ratio,
        variance_ratio: variance / var_leading,
        mean_z: oracle.map(|o| (mc.mean - o.mean) / se.mean),
        variance_z: oracle.map(|o| (mc.variance - o.variance) / se.variance),
    })
}

/// Monte Carlo and exact moments, leading terms and their ratios on the
/// `(x₀, n, h)` grid. Grid points run concurrently; point `k` draws from
/// stream `(seed, k)` and records keep grid order.
pub fn run_bias_variance_experiment(config: &ExperimentConfig) -> Result<BiasVarianceReport, ExperimentError> {
    let sites = Site::all(config)?;
    let mut grid = Vec::new();
    for site in &sites {
        for &n in &config.n {
            for h in site.bandwidths(n)? {
                grid.push((site, n, h));
            }
        }
    }
    let records = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(site, n, h))| record(config, site, n, h, RngStream::new(config.seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BiasVarianceReport { records })
}
