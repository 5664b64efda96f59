use serde::Serialize;

use super::{BandwidthRule, ExperimentConfig, ExperimentError, RateBackend, Site};
use crate::oracle::mc_moments;
use crate::simulate::RngStream;

/// Location of a minimum found on a log grid and refined by golden section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgminResult {
    pub h: f64,
    pub value: f64,
    /// The minimum sits on an end of the search interval.
    pub at_boundary: bool,
}

/// Minimises `f` over `[h_min, h_max]`: a log-spaced scan of `points`
/// values, then golden-section search in `log h` between the neighbours of
/// the best grid point.
pub fn argmin_log_grid<F>(h_min: f64, h_max: f64, points: usize, mut f: F) -> Result<ArgminResult, ExperimentError>
where
    F: FnMut(f64) -> Result<f64, ExperimentError>,
{
    if !(h_min > 0.0) || !(h_max > h_min) || points < 3 {
        return Err(ExperimentError::Invalid(format!(
            "bandwidth search needs 0 < h_min < h_max and 3 or more points, got [{h_min}, {h_max}] with {points}"
        )));
    }
    let (a, b) = (h_min.ln(), h_max.ln());
    let grid: Vec<f64> = (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect();
    let values = grid.iter().map(|&t| f(t.exp())).collect::<Result<Vec<_>, _>>()?;
    let best = values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    if best == 0 || best == points - 1 {
        return Ok(ArgminResult {
            h: grid[best].exp(),
            value: values[best],
            at_boundary: true,
        });
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (grid[best - 1], grid[best + 1]);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1.exp())?;
    let mut f2 = f(x2.exp())?;
    while hi - lo > 1e-6 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2.exp())?;
        }
    }
    let (t, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let (t, v) = if values[best] < v { (grid[best], values[best]) } else { (t, v) };
    Ok(ArgminResult {
        h: t.exp(),
        value: v,
        at_boundary: false,
    })
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Zero for two points.
    pub slope_se: f64,
    /// `√(SSR / (m − 2))`, zero for two points.
    pub rmse: f64,
}

impl OlsFit {
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        y - self.intercept - self.slope * x
    }
}

pub fn ols_fit(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let m = x.len();
    if m < 2 || y.len() != m {
        return None;
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let (rmse, slope_se) = if m > 2 {
        let s2 = ssr / (mf - 2.0);
        (s2.sqrt(), (s2 / sxx).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(OlsFit {
        slope,
        intercept,
        slope_se,
        rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRecord {
    pub x0_index: usize,
    pub x0: String,
    pub n: usize,
    /// MSE-minimising (or formula) bandwidth used in the fit.
    pub h: f64,
    pub mse: f64,
    /// Monte Carlo s.e. of `mse` at the selected grid bandwidth.
    pub mse_se: Option<f64>,
    pub h_formula: Option<f64>,
    /// `h_formula / h`.
    pub formula_ratio: Option<f64>,
    pub at_boundary: bool,
    pub used_in_fit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub x0_index: usize,
    pub x0: String,
    pub estimator: &'static str,
    /// `−1/(d+4)` for the fixed estimator, `−1/(d+8)` for the adaptive one.
    pub theoretical_slope: f64,
    pub fit: Option<OlsFit>,
    /// Smallest `n`, when excluded as pre-asymptotic.
    pub dropped_n: Option<usize>,
    pub degenerate: Option<String>,
    pub records: Vec<RateRecord>,
}

impl RateFit {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn formula_ratio_at_largest_n(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.formula_ratio)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub fits: Vec<RateFit>,
}

/// Least-squares vertex of a parabola through `(t, y)`, if convex.
fn parabola_vertex(t: &[f64], y: &[f64]) -> Option<f64> {
    let m = t.len() as f64;
    let mt = t.iter().sum::<f64>() / m;
    let s: Vec<f64> = t.iter().map(|v| v - mt).collect();
    let (mut a11, mut a12, mut a22, mut b1, mut b2, mut a02, mut b0) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &v) in s.iter().zip(y) {
        a11 += x * x;
        a12 += x * x * x;
        a22 += x.powi(4);
        a02 += x * x;
        b0 += v;
        b1 += x * v;
        b2 += x * x * v;
    }
    // normal equations for v = c0 + c1 x + c2 x², with Σx = 0
    let mat = [[m, 0.0, a02], [0.0, a11, a12], [a02, a12, a22]];
    let rhs = [b0, b1, b2];
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let dm = det(mat);
    if dm.abs() < 1e-300 {
        return None;
    }
    let col = |k: usize| {
        let mut a = mat;
        for r in 0..3 {
            a[r][k] = rhs[r];
        }
        det(a) / dm
    };
    let (c1, c2) = (col(1), col(2));
    (c2 > 0.0).then(|| mt - c1 / (2.0 * c2))
}

/// Optimal-bandwidth rate fits, one per `x₀`. With the oracle backend each
/// `h` minimises the exact MSE; with the Monte Carlo backend it is the
/// vertex of a parabola fitted to `log MSE` around the best grid bandwidth.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<RateReport, ExperimentError> {
    let n_min = config.n[0] as f64;
    let n_max = *config.n.last().expect("non-empty n grid") as f64;
    if n_max / n_min < 10f64.powf(1.5) {
        return Err(ExperimentError::Invalid(format!(
            "rate experiment needs an n grid spanning at least 1.5 decades, got {n_min}..{n_max}"
        )));
    }
    let use_formula = match config.bandwidth {
        BandwidthRule::MseArgmin => false,
        BandwidthRule::HStarFixed | BandwidthRule::HStarAdaptive => true,
        _ => {
            return Err(ExperimentError::Invalid(
                "rate experiment needs bandwidth rule mse_argmin, h_star_fixed or h_star_adaptive".into(),
            ))
        }
    };
    if config.rate.backend == RateBackend::Oracle && !use_formula && matches!(config.estimator, super::EstimatorSpec::AdaptivePilot { .. }) {
        return Err(ExperimentError::Invalid("pilot weights have no exact MSE; use the monte_carlo backend".into()));
    }
    let d = config.dim() as f64;
    let theoretical_slope = if config.estimator.is_adaptive() {
        -1.0 / (d + 8.0)
    } else {
        -1.0 / (d + 4.0)
    };
    let sites = Site::all(config)?;
    let mut fits = Vec::new();
    let mut stream = 0u64;
    for site in &sites {
        let mut records = Vec::new();
        let mut degenerate = None;
        for &n in &config.n {
            let h_formula = site.h_star(n)?;
            let (h, mse, mse_se, at_boundary) = if use_formula {
                let Some(h) = h_formula else {
                    degenerate = Some("optimal bandwidth formula is degenerate".to_string());
                    break;
                };
                let mse = site.oracle(n, h)?.map_or(f64::NAN, |m| m.mse);
                (h, mse, None, false)
            } else {
                match config.rate.backend {
                    RateBackend::Oracle => {
                        let r = argmin_log_grid(config.rate.h_min, site.h_max(), config.rate.grid_points, |h| {
                            Ok(site.oracle(n, h)?.expect("exact moments exist").mse)
                        })?;
                        (r.h, r.value, None, r.at_boundary)
                    }
                    RateBackend::MonteCarlo => {
                        let (a, b) = (config.rate.h_min.ln(), site.h_max().ln());
                        let m = config.rate.grid_points;
                        let grid: Vec<f64> = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
                        let mut mses = Vec::with_capacity(m);
                        let mut ses = Vec::with_capacity(m);
                        for &t in &grid {
                            let rep = mc_moments(
                                &site.sampler(n),
                                &site.request(t.exp()),
                                config.replicates,
                                RngStream::new(config.seed, stream),
                            )?;
                            stream += 1;
                            mses.push(rep.mse);
                            ses.push(rep.standard_errors.expect("Monte Carlo report").mse);
                        }
                        let best = (0..m).min_by(|&i, &j| mses[i].total_cmp(&mses[j])).expect("non-empty grid");
                        let lo = best.saturating_sub(2);
                        let hi = (best + 3).min(m);
                        let logs: Vec<f64> = mses[lo..hi].iter().map(|v| v.ln()).collect();
                        let vertex = parabola_vertex(&grid[lo..hi], &logs).filter(|v| *v >= grid[lo] && *v <= grid[hi - 1]);
                        let t = vertex.unwrap_or(grid[best]);
                        (t.exp(), mses[best], Some(ses[best]), vertex.is_none() && (best == 0 || best == m - 1))
                    }
                }
            };
            if at_boundary {
                degenerate.get_or_insert_with(|| format!("MSE minimum on the search boundary at n = {n}"));
            }
            records.push(RateRecord {
                x0_index: site.index,
                x0: site.x0_label(),
                n,
                h,
                mse,
                mse_se,
                h_formula,
                formula_ratio: h_formula.map(|f| f / h),
                at_boundary,
                used_in_fit: true,
            });
        }
        let (fit, dropped_n) = if degenerate.is_some() {
            (None, None)
        } else {
            fit_with_drop(&mut records)
        };
        fits.push(RateFit {
            x0_index: site.index,
            x0: site.x0_label(),
            estimator: config.estimator.label(),
            theoretical_slope,
            fit,
            dropped_n,
            degenerate,
            records,
        });
    }
    Ok(RateReport { fits })
}

/// Fits `log h` on `log n`; the smallest `n` is excluded when its residual
/// against the fit of the remaining points exceeds three times that fit's
/// RMSE.
fn fit_with_drop(records: &mut [RateRecord]) -> (Option<OlsFit>, Option<usize>) {
    let x: Vec<f64> = records.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = records.iter().map(|r| r.h.ln()).collect();
    if records.len() >= 4 {
        if let Some(rest) = ols_fit(&x[1..], &y[1..]) {
            let r = rest.residual(x[0], y[0]).abs();
            if r > 3.0 * rest.rmse && r > 1e-9 {
                records[0].used_in_fit = false;
                return (Some(rest), Some(records[0].n));
            }
        }
    }
    (ols_fit(&x, &y), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_an_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.25 * v).collect();
        let f = ols_fit(&x, &y).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-14);
        assert!((f.intercept - 1.5).abs() < 1e-14);
        assert!(f.slope_se < 1e-14);
    }

    #[test]
    fn golden_section_finds_interior_minimum() {
        let r = argmin_log_grid(1e-3, 1.0, 20, |h| Ok((h.ln() - 0.05f64.ln()).powi(2) + 1.0)).unwrap();
        assert!(!r.at_boundary);
        assert!((r.h / 0.05 - 1.0).abs() < 1e-5, "{}", r.h);
        let r = argmin_log_grid(1e-3, 1.0, 20, Ok).unwrap();
        assert!(r.at_boundary);
        assert!((r.h / 1e-3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let t = [0.0, 0.5, 1.0, 1.5, 2.0];
        let y: Vec<f64> = t.iter().map(|v| 3.0 * (v - 1.2f64).powi(2) - 1.0).collect();
        assert!((parabola_vertex(&t, &y).unwrap() - 1.2).abs() < 1e-12);
        let y: Vec<f64> = t.iter().map(|v| -(v * v)).collect();
        assert!(parabola_vertex(&t, &y).is_none());
    }

    #[test]
    fn pre_asymptotic_point_is_dropped_and_recorded() {
        let mk = |n: usize, h: f64| RateRecord {
            x0_index: 0,
            x0: "0".into(),
            n,
            h,
            mse: 0.0,
            mse_se: None,
            h_formula: None,
            formula_ratio: None,
            at_boundary: false,
            used_in_fit: true,
        };
        let noise = [0.0, 1e-3, -1e-3, 5e-4];
        let mut recs: Vec<RateRecord> = [100usize, 1000, 10_000, 100_000, 1_000_000]
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let base = (n as f64).powf(-0.2);
                let h = if i == 0 { base * 1.5 } else { base * (1.0 + noise[i - 1]) };
                mk(n, h)
            })
            .collect();
        let (fit, dropped) = fit_with_drop(&mut recs);
        assert_eq!(dropped, Some(100));
        assert!(!recs[0].used_in_fit);
        assert!((fit.unwrap().slope + 0.2).abs() < 1e-3);
    }
}
