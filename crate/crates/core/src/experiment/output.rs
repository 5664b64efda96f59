use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{theory_quad, ExperimentConfig, ExperimentError, OpCheckReport, Site};
use crate::asymptotics::{h_star_fixed, planar_constants, ADAPTIVE_MIN_GAMMA};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
/// Results do not depend on the thread count.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, ExperimentError> {
    match threads {
        None => Ok(f()),
        Some(t) => Ok(rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(f)),
    }
}

/// Writes records as CSV with a header row, LF line endings and `.` decimals.
pub fn write_csv<W: Write, R: Serialize>(records: &[R], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Machine-readable outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub replicates: usize,
    pub rows: usize,
    pub flags: BTreeMap<String, bool>,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn new(experiment: &str, config: &ExperimentConfig, rows: usize) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed: config.seed,
            replicates: config.replicates,
            rows,
            flags: BTreeMap::new(),
            passed: true,
            notes: Vec::new(),
        }
    }

    pub fn flag(&mut self, name: impl Into<String>, ok: bool) {
        self.passed &= ok;
        self.flags.insert(name.into(), ok);
    }
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub(crate) struct OpCheckCsvRow {
    x0_index: usize,
    x0: String,
    n: usize,
    h: f64,
    replicates: usize,
    predicted_bias: f64,
    z_mean: f64,
    z_mean_se: f64,
    z_median: f64,
    z_variance: f64,
    z_variance_se: f64,
    q50: f64,
    q50_se: f64,
    q90: f64,
    q90_se: f64,
    q95: f64,
    q95_se: f64,
    q99: f64,
    q99_se: f64,
}

impl OpCheckReport {
    /// Flat rows for CSV output, one column pair per quantile.
    pub fn csv_rows(&self) -> Vec<impl Serialize + Clone + PartialEq + std::fmt::Debug> {
        self.rows
            .iter()
            .map(|r| {
                let q = &r.abs_z_quantiles;
                OpCheckCsvRow {
                    x0_index: r.x0_index,
                    x0: r.x0.clone(),
                    n: r.n,
                    h: r.h,
                    replicates: r.replicates,
                    predicted_bias: r.predicted_bias,
                    z_mean: r.z_mean,
                    z_mean_se: r.z_mean_se,
                    z_median: r.z_median,
                    z_variance: r.z_variance,
                    z_variance_se: r.z_variance_se,
                    q50: q[0].value,
                    q50_se: q[0].se,
                    q90: q[1].value,
                    q90_se: q[1].se,
                    q95: q[2].value,
                    q95_se: q[2].se,
                    q99: q[3].value,
                    q99_se: q[3].se,
                }
            })
            .collect()
    }
}

/// Expansion constants and optimal bandwidths per `(x₀, n)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    pub x0_index: usize,
    pub x0: String,
    pub n: usize,
    pub lambda0: f64,
    pub laplacian: f64,
    pub bias_coefficient_fixed: f64,
    pub h_star_fixed: Option<f64>,
    /// `∫A(u; x₀) du`, for `γ > 5`.
    pub a_integral: Option<f64>,
    pub bias_coefficient_adaptive: Option<f64>,
    pub h_star_adaptive: Option<f64>,
    pub c4: Option<f64>,
    pub c2: Option<f64>,
}

pub fn theory_table(config: &ExperimentConfig) -> Result<Vec<TheoryRow>, ExperimentError> {
    let model = &config.model;
    let kernel = &config.kernel;
    let smooth = kernel.gamma() > ADAPTIVE_MIN_GAMMA;
    let mut rows = Vec::new();
    for (index, x0) in config.x0.iter().enumerate() {
        let lambda0 = model.intensity_at(x0)?;
        let laplacian = model.laplacian(x0)?;
        let a = if smooth {
            Some(if model.is_constant() {
                0.0
            } else {
                crate::asymptotics::a_integral(model, kernel, x0, theory_quad())?
            })
        } else {
            None
        };
        let (c4, c2) = if smooth && config.dim() == 2 {
            let (a, b) = planar_constants(model, x0)?;
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        for &n in &config.n {
            let h_adaptive = a.and_then(|a| crate::asymptotics::h_star_adaptive_from_values(kernel, lambda0, a, n).h_star);
            rows.push(TheoryRow {
                x0_index: index,
                x0: x0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
                n,
                lambda0,
                laplacian,
                bias_coefficient_fixed: laplacian * kernel.moments().v / 2.0,
                h_star_fixed: h_star_fixed(model, kernel, x0, n)?.h_star,
                a_integral: a,
                bias_coefficient_adaptive: a.map(|a| lambda0 * a),
                h_star_adaptive: h_adaptive,
                c4,
                c2,
            });
        }
    }
    Ok(rows)
}

/// Exact and leading-order bias, variance and MSE along a log grid of
/// bandwidths, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub x0_index: usize,
    pub x0: String,
    pub n: usize,
    pub h: f64,
    pub bias_leading: Option<f64>,
    pub var_leading: f64,
    pub amse: Option<f64>,
    pub oracle_bias: Option<f64>,
    pub oracle_variance: Option<f64>,
    pub oracle_mse: Option<f64>,
}

pub fn export_plot_data(config: &ExperimentConfig) -> Result<Vec<PlotRow>, ExperimentError> {
    let mut rows = Vec::new();
    let m = config.rate.grid_points;
    for site in Site::all(config)? {
        let (a, b) = (config.rate.h_min.ln(), site.h_max().ln());
        if !(b > a) {
            return Err(ExperimentError::Invalid(format!(
                "h_min {} exceeds the largest admissible bandwidth at x0 {:?}",
                config.rate.h_min, site.x0
            )));
        }
        for &n in &config.n {
            for i in 0..m {
                let h = (a + (b - a) * i as f64 / (m - 1) as f64).exp();
                let bias_leading = site.bias_leading(h)?;
                let var_leading = site.var_leading(n, h)?;
                let oracle = site.oracle(n, h)?;
                rows.push(PlotRow {
                    x0_index: site.index,
                    x0: site.x0_label(),
                    n,
                    h,
                    bias_leading,
                    var_leading,
                    amse: bias_leading.map(|b| b * b + var_leading),
                    oracle_bias: oracle.map(|o| o.bias),
                    oracle_variance: oracle.map(|o| o.variance),
                    oracle_mse: oracle.map(|o| o.mse),
                });
            }
        }
    }
    Ok(rows)
}
