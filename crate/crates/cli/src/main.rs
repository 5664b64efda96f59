//! `infill`: simulate point patterns, estimate intensities and run the
//! experiment campaigns described by a TOML configuration.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use infill_core::estimate::estimate;
use infill_core::experiment::{
    estimate_requests, export_plot_data, run_bias_variance_experiment, run_identity_suite, run_op_check, run_rate_experiment,
    theory_table, with_threads, write_csv, write_summary, ExperimentConfig, IdentityMutation, IdentitySuiteOptions,
    ProcessSpec, Summary,
};
use infill_core::simulate::{sample_superposition, sample_thomas, write_superposed_csv, RngStream, SuperposedSample};

#[derive(Parser)]
#[command(name = "infill", version, about = "Kernel intensity estimation under infill asymptotics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration; every field has a default.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `threads`.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one superposition of `n` replicates and write it as CSV.
    Simulate {
        /// Number of replicates (default: first entry of the n grid).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simulate `Y_n` and estimate the intensity at every configured `x0`.
    Estimate {
        #[arg(long)]
        n: Option<usize>,
        /// Bandwidth (default: the configured bandwidths).
        #[arg(long)]
        h: Option<f64>,
    },
    /// Print expansion constants and optimal bandwidths.
    Theory,
    /// Run an experiment campaign.
    #[command(subcommand)]
    Experiment(ExperimentKind),
    /// Exact and leading-order MSE curves over a bandwidth grid.
    ExportPlotData,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Monte Carlo and exact bias/variance on the (x0, n, h) grid
    BiasVariance,
    /// MSE-minimising bandwidth against n, with log-log slope fits
    Rate,
    /// Quantiles of the standardised deviation across n
    OpCheck,
    /// Kernel closed forms against quadrature
    Identities {
        /// Multiply the closed form of one named check, e.g.
        /// `moment:V[d=2,gamma=1]`, by `--factor`.
        #[arg(long)]
        mutate: Option<String>,
        #[arg(long, default_value_t = 1.01)]
        factor: f64,
    },
}

fn load_config(global: &Global) -> Result<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => {
            let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml_str(&src).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default_config(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(threads) = global.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        config.threads = Some(threads);
    }
    if let Some(out) = &global.out {
        config.output = out.clone();
    }
    Ok(config)
}

#[derive(Serialize)]
struct EstimateRow {
    x0_index: usize,
    x0: String,
    n: usize,
    h: f64,
    estimator: &'static str,
    estimate: f64,
    intensity: f64,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn simulate(config: &ExperimentConfig, n: usize, stream: RngStream) -> Result<SuperposedSample<f64>> {
    Ok(match config.process {
        ProcessSpec::Poisson => sample_superposition(&config.model, n, stream)?,
        ProcessSpec::Thomas {
            parent_intensity,
            offspring_mean,
            sigma,
        } => {
            let reps = (0..n as u64)
                .map(|i| sample_thomas(parent_intensity, offspring_mean, sigma, config.model.window(), stream.child(n as u64, i)))
                .collect::<Result<Vec<_>, _>>()?;
            SuperposedSample::new(reps)?
        }
    })
}

fn finish(config: &ExperimentConfig, summary: &Summary) -> Result<bool> {
    let path = config.output.join(format!("{}_summary.json", summary.experiment));
    write_summary(summary, &path)?;
    println!(
        "{}: {} rows, {} -> {}",
        summary.experiment,
        summary.rows,
        if summary.passed { "all flags pass" } else { "some flags fail" },
        config.output.display()
    );
    for (name, ok) in &summary.flags {
        println!("  {name}: {}", if *ok { "pass" } else { "FAIL" });
    }
    Ok(summary.passed)
}

fn run(cli: Cli) -> Result<bool> {
    let config = load_config(&cli.global)?;
    let out = config.output.clone();
    match cli.command {
        Command::Simulate { n } => {
            let n = n.unwrap_or(config.n[0]);
            let sample = simulate(&config, n, RngStream::new(config.seed, 0))?;
            write_superposed_csv(&sample, create(&out, "pattern.csv")?)?;
            println!("{} points in {n} replicates -> {}", sample.total_count(), out.join("pattern.csv").display());
        }
        Command::Estimate { n, h } => {
            let n = n.unwrap_or(config.n[0]);
            let sample = simulate(&config, n, RngStream::new(config.seed, 0))?;
            let mut rows = Vec::new();
            for index in 0..config.x0.len() {
                for (h, req) in estimate_requests(&config, index, n, h)? {
                    let x0 = &config.x0[index];
                    let row = EstimateRow {
                        x0_index: index,
                        x0: x0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
                        n,
                        h,
                        estimator: config.estimator.label(),
                        estimate: estimate(&sample, &req)?,
                        intensity: config.model.value(x0),
                    };
                    println!(
                        "x0 = [{}], n = {n}, h = {h}: estimate {:.6} (intensity {:.6})",
                        row.x0, row.estimate, row.intensity
                    );
                    rows.push(row);
                }
            }
            write_csv(&rows, create(&out, "estimate.csv")?)?;
        }
        Command::Theory => {
            let rows = theory_table(&config)?;
            write_csv(&rows, create(&out, "theory.csv")?)?;
            write_csv(&rows, io::stdout().lock())?;
        }
        Command::ExportPlotData => {
            let rows = with_threads(config.threads, || export_plot_data(&config))??;
            write_csv(&rows, create(&out, "plot_data.csv")?)?;
            println!("{} rows -> {}", rows.len(), out.join("plot_data.csv").display());
        }
        Command::Experiment(kind) => return experiment(&config, kind),
    }
    Ok(true)
}

fn experiment(config: &ExperimentConfig, kind: ExperimentKind) -> Result<bool> {
    let out = &config.output;
    match kind {
        ExperimentKind::BiasVariance => {
            let report = with_threads(config.threads, || run_bias_variance_experiment(config))??;
            write_csv(&report.records, create(out, "bias_variance.csv")?)?;
            let mut s = Summary::new("bias_variance", config, report.records.len());
            s.flag("mc_within_3se_of_exact", report.mc_consistent(3.0));
            finish(config, &s)
        }
        ExperimentKind::Rate => {
            let report = with_threads(config.threads, || run_rate_experiment(config))??;
            let records: Vec<_> = report.fits.iter().flat_map(|f| f.records.iter().cloned()).collect();
            write_csv(&records, create(out, "rate.csv")?)?;
            let mut s = Summary::new("rate", config, records.len());
            for f in &report.fits {
                let i = f.x0_index;
                match f.slope() {
                    Some(slope) => {
                        s.flag(format!("slope_within_0.02[x0={i}]"), (slope - f.theoretical_slope).abs() <= 0.02);
                        if let Some(r) = f.formula_ratio_at_largest_n() {
                            s.flag(format!("formula_ratio_within_10pct[x0={i}]"), (r - 1.0).abs() < 0.1);
                        }
                        s.notes.push(format!(
                            "x0={i}: slope {slope} (theory {}), se {}",
                            f.theoretical_slope,
                            f.fit.map_or(f64::NAN, |f| f.slope_se)
                        ));
                    }
                    None => s.flag(format!("fit[x0={i}]"), false),
                }
                if let Some(n) = f.dropped_n {
                    s.notes.push(format!("x0={i}: dropped n = {n} as pre-asymptotic"));
                }
                if let Some(reason) = &f.degenerate {
                    s.notes.push(format!("x0={i}: degenerate: {reason}"));
                }
            }
            let fits = serde_json::to_string_pretty(&report.fits.iter().map(|f| json!({
                "x0_index": f.x0_index,
                "x0": f.x0,
                "estimator": f.estimator,
                "theoretical_slope": f.theoretical_slope,
                "fit": f.fit,
                "dropped_n": f.dropped_n,
                "degenerate": f.degenerate,
            })).collect::<Vec<_>>())?;
            let mut w = create(out, "rate_fits.json")?;
            writeln!(w, "{fits}")?;
            w.flush()?;
            finish(config, &s)
        }
        ExperimentKind::OpCheck => {
            let report = with_threads(config.threads, || run_op_check(config))??;
            write_csv(&report.csv_rows(), create(out, "op_check.csv")?)?;
            let mut s = Summary::new("op_check", config, report.rows.len());
            for (i, ok) in report.stable.iter().enumerate() {
                s.flag(format!("quantiles_stable[x0={i}]"), *ok);
            }
            for (i, v) in report.unit_variance.iter().enumerate() {
                if let Some(ok) = v {
                    s.flag(format!("unit_variance[x0={i}]"), *ok);
                }
            }
            finish(config, &s)
        }
        ExperimentKind::Identities { mutate, factor } => {
            let opts = IdentitySuiteOptions {
                mutation: mutate.map(|check| IdentityMutation { check, factor }),
                ..Default::default()
            };
            let report = with_threads(config.threads, || run_identity_suite(&opts))?;
            write_csv(&report.checks, create(out, "identities.csv")?)?;
            let mut s = Summary::new("identities", config, report.checks.len());
            for family in ["moment", "ibp1", "ibp2", "ibp4", "planar", "gu"] {
                s.flag(family, report.family_passed(family));
            }
            s.flag("runtime_below_60s", report.seconds < 60.0);
            for c in report.failures() {
                s.notes.push(format!("{} failed: expected {}, computed {}, error {:e}", c.name, c.expected, c.computed, c.error));
            }
            finish(config, &s)
        }
    }
}

/// Exit status 1 on errors, 2 when an experiment ran but a flag failed.
fn main() {
    match run(Cli::parse()) {
        Ok(true) => {}
        Ok(false) => std::process::exit(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
