//! Acceptance criteria 1 to 10. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::time::Instant;

use infill_core::asymptotics::{
    a_integral, a_integral_closed_1d, a_integral_closed_2d, bias_leading_fixed, richardson,
};
use infill_core::experiment::{
    run_bias_variance_experiment, run_identity_suite, run_op_check, run_rate_experiment, with_threads, write_csv,
    ExperimentConfig, IdentitySuiteOptions,
};
use infill_core::kernel::KernelSpec;
use infill_core::model::{AbramsonWeight, IntensityFamily, IntensityModel, PairCorrelationModel, Polynomial, Window};
use infill_core::oracle::{exact_moments_adaptive, exact_moments_fixed, OracleOptions};
use infill_core::quadrature::QuadOptions;

type Outcome = Result<String, String>;

fn window(d: usize) -> Window<f64> {
    Window::new(vec![-1.0; d], vec![1.0; d]).unwrap()
}

fn log_poly(d: usize, terms: &[(&[usize], f64)]) -> IntensityModel<f64> {
    let p = Polynomial::from_terms(d, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap();
    IntensityModel::new(IntensityFamily::LogPolynomial { exponent: p }, window(d)).unwrap()
}

fn bump(center: &[f64]) -> IntensityModel<f64> {
    let family = IntensityFamily::GaussianBump {
        a: 5.0,
        b: 20.0,
        center: center.to_vec(),
        scale: 0.4,
    };
    IntensityModel::new(family, window(center.len())).unwrap()
}

fn constant(d: usize, a: f64) -> IntensityModel<f64> {
    IntensityModel::new(IntensityFamily::Constant { a }, window(d)).unwrap()
}

fn cubic_1d() -> IntensityModel<f64> {
    log_poly(1, &[(&[0], 1.0), (&[1], 0.8), (&[2], -0.5), (&[3], 0.1)])
}

fn quadratic_2d() -> IntensityModel<f64> {
    log_poly(
        2,
        &[
            (&[0, 0], 1.0),
            (&[1, 0], 0.8),
            (&[0, 1], -0.4),
            (&[2, 0], -0.3),
            (&[1, 1], 0.2),
            (&[0, 2], -0.25),
        ],
    )
}

fn x0_for(d: usize) -> Vec<f64> {
    if d == 1 {
        vec![0.1]
    } else {
        vec![0.1, -0.1]
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion_1() -> Outcome {
    let report = run_identity_suite(&IdentitySuiteOptions::default());
    let moments: Vec<_> = report.checks.iter().filter(|c| c.family == "moment").collect();
    let worst = moments.iter().map(|c| c.error).fold(0.0, f64::max);
    let failed: Vec<_> = moments.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let detail = format!("{} checks, worst error {worst:.2e}, suite time {:.2} s", moments.len(), report.seconds);
    if failed.is_empty() && report.seconds < 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed {failed:?}"))
    }
}

fn criterion_2() -> Outcome {
    let report = run_identity_suite(&IdentitySuiteOptions::default());
    let ibp: Vec<_> = report.checks.iter().filter(|c| c.family != "moment").collect();
    let worst = ibp.iter().map(|c| c.error).fold(0.0, f64::max);
    let failed: Vec<_> = ibp.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    let planar = ibp.iter().filter(|c| c.family == "planar").count();
    let detail = format!("{} identities ({planar} from the planar table), worst |err| {worst:.2e}", ibp.len());
    if failed.is_empty() && planar >= 18 {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed {failed:?}"))
    }
}

fn criterion_3() -> Outcome {
    let kernel = |d| KernelSpec::new(d, 1.0).unwrap();
    let cases = [
        ("log-polynomial d=1", cubic_1d()),
        ("log-polynomial d=2", quadratic_2d()),
        ("bump d=1", bump(&[0.2])),
        ("bump d=2", bump(&[0.2, -0.1])),
    ];
    let opts = OracleOptions::default();
    let mut worst: f64 = 0.0;
    for (name, model) in cases {
        let d = model.dim();
        let x0 = x0_for(d);
        let k = kernel(d);
        let scaled = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| {
                exact_moments_fixed(&model, &PairCorrelationModel::Poisson, &k, &x0, h, 1, &opts).map(|m| m.bias / (h * h))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let limit = richardson(&scaled, 2.0, &[2, 4]);
        let coefficient = bias_leading_fixed(&model, &k, &x0, 1.0).map_err(err)?;
        let rel = (limit / coefficient - 1.0).abs();
        worst = worst.max(rel);
        if rel >= 0.01 {
            return Err(format!("{name}: extrapolated {limit} vs coefficient {coefficient} (rel {rel:.2e})"));
        }
    }
    Ok(format!("4 models, worst relative error {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let opts = OracleOptions::default();
    let mut ratios = Vec::new();
    for model in [constant(1, 50.0), cubic_1d(), constant(2, 50.0), quadratic_2d()] {
        let d = model.dim();
        let x0 = x0_for(d);
        let k = KernelSpec::new(d, 1.0).unwrap();
        let (h, n) = (0.02, 10);
        let m = exact_moments_fixed(&model, &PairCorrelationModel::Poisson, &k, &x0, h, n, &opts).map_err(err)?;
        let ratio = m.variance * n as f64 * h.powi(d as i32) / (model.value(&x0) * k.moments().q);
        ratios.push(ratio);
    }
    let detail = format!("variance ratios {:?}", ratios.iter().map(|r| format!("{r:.5}")).collect::<Vec<_>>());
    if ratios.iter().all(|r| (0.97..=1.03).contains(r)) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let opts = OracleOptions::default();
    let mut lines = Vec::new();
    for model in [cubic_1d(), quadratic_2d()] {
        let d = model.dim();
        let x0 = x0_for(d);
        let k = KernelSpec::new(d, 6.0).unwrap();
        let w = AbramsonWeight::new(model.clone(), x0.clone()).map_err(err)?;
        let bias = |h: f64| exact_moments_adaptive(&w, &PairCorrelationModel::Poisson, &k, h, 1, &opts).map(|m| m.bias);
        let fixed_coefficient = bias_leading_fixed(&model, &k, &x0, 1.0).map_err(err)?;
        let b005 = bias(0.05).map_err(err)?;
        let second = (b005 / 0.0025).abs() / fixed_coefficient.abs();
        let scaled = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| bias(h).map(|b| b / h.powi(4)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let limit = richardson(&scaled, 2.0, &[2, 4]);
        let predicted = model.value(&x0) * a_integral(&model, &k, &x0, QuadOptions::default()).map_err(err)?;
        let rel = (limit / predicted - 1.0).abs();
        lines.push(format!("d={d}: |bias/h^2| / fixed coefficient {second:.2e}, h^4 coefficient rel err {rel:.2e}"));
        if second >= 0.1 || rel >= 0.02 {
            return Err(lines.join("; "));
        }
    }
    Ok(lines.join("; "))
}

fn criterion_6() -> Outcome {
    let q = QuadOptions {
        tol: 1e-12,
        min_level: 0,
        max_level: 6,
    };
    let gamma = 6.0;
    let linear_1d = log_poly(1, &[(&[0], 1.0), (&[1], 0.8)]);
    let models: Vec<IntensityModel<f64>> = vec![
        linear_1d.clone(),
        cubic_1d(),
        bump(&[0.2]),
        log_poly(2, &[(&[0, 0], 1.0), (&[1, 0], 0.8), (&[0, 1], -0.4)]),
        quadratic_2d(),
        bump(&[0.2, -0.1]),
    ];
    let mut worst: f64 = 0.0;
    for model in &models {
        let d = model.dim();
        let x0 = x0_for(d);
        let k = KernelSpec::new(d, gamma).unwrap();
        let quad = a_integral(model, &k, &x0, q).map_err(err)?;
        let closed = if d == 1 {
            a_integral_closed_1d(model, &x0, gamma)
        } else {
            a_integral_closed_2d(model, &x0, gamma)
        }
        .map_err(err)?;
        let rel = ((quad - closed) / closed).abs();
        worst = worst.max(rel);
        if rel >= 1e-6 {
            return Err(format!("d={d}: quadrature {quad} vs closed form {closed}"));
        }
    }
    let k = KernelSpec::new(1, gamma).unwrap();
    let beta: f64 = 0.8;
    let expected = k.moments().v4 * beta.powi(4) / 24.0;
    let got = a_integral_closed_1d(&linear_1d, &[0.1], gamma).map_err(err)?;
    let rel = ((got - expected) / expected).abs();
    if rel >= 1e-6 {
        return Err(format!("linear exponent: {got} vs V4 beta^4/24 = {expected}"));
    }
    Ok(format!("6 models, worst relative error {worst:.2e}; linear exponent matches V4 beta^4/24 to {rel:.1e}"))
}

fn rate_config(d: usize, adaptive: bool, c0: f64) -> String {
    let (lo, hi, x0, terms) = if d == 1 {
        ("[-1.0]", "[1.0]", "[[0.0]]", format!("[{{ exponents = [0], coefficient = {c0} }}, {{ exponents = [1], coefficient = 0.8 }}]"))
    } else {
        (
            "[-1.0, -1.0]",
            "[1.0, 1.0]",
            "[[0.0, 0.0]]",
            format!(
                "[{{ exponents = [0, 0], coefficient = {c0} }}, {{ exponents = [1, 0], coefficient = 0.8 }}, {{ exponents = [0, 1], coefficient = 0.4 }}]"
            ),
        )
    };
    let (kind, gamma) = if adaptive { ("adaptive", 6.0) } else { ("fixed", 1.0) };
    format!(
        "[model]\nfamily = \"log_polynomial\"\nlower = {lo}\nupper = {hi}\nterms = {terms}\n\
         [kernel]\ngamma = {gamma}\n[estimator]\nkind = \"{kind}\"\n\
         [design]\nx0 = {x0}\nn = [100, 316, 1000, 3162, 10000, 31623, 100000]\nbandwidth = {{ rule = \"mse_argmin\" }}\n\
         [rate]\nh_min = 1e-4\ngrid_points = 30\n"
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (d, adaptive, c0) in [(1, false, 10.0), (2, false, 10.0), (1, true, 30.0), (2, true, 30.0)] {
        let config = ExperimentConfig::from_toml_str(&rate_config(d, adaptive, c0)).map_err(err)?;
        let report = run_rate_experiment(&config).map_err(err)?;
        let fit = &report.fits[0];
        let Some(slope) = fit.slope() else {
            return Err(format!("d={d} adaptive={adaptive}: no fit ({:?})", fit.degenerate));
        };
        let ratio = fit.formula_ratio_at_largest_n().unwrap_or(f64::NAN);
        let pass = (slope - fit.theoretical_slope).abs() <= 0.02 && (ratio - 1.0).abs() < 0.1;
        ok &= pass;
        lines.push(format!(
            "{} d={d}: slope {slope:.4} (theory {:.4}), h*/argmin at n=1e5 {ratio:.4}{}",
            if adaptive { "adaptive" } else { "fixed" },
            fit.theoretical_slope,
            fit.dropped_n.map_or(String::new(), |n| format!(", dropped n={n}"))
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    lines.push(format!("{secs:.1} s"));
    if ok && secs < 600.0 {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

const POISSON_LOGLIN_2D: &str = "[model]\nfamily = \"log_polynomial\"\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\n\
    terms = [{ exponents = [0, 0], coefficient = 4.0 }, { exponents = [1, 0], coefficient = 0.8 }, { exponents = [0, 1], coefficient = -0.5 }]\n";

fn consistency_configs() -> Vec<(&'static str, String)> {
    let design = "[design]\nx0 = [[0.5, 0.5]]\nn = [20]\nbandwidth = { rule = \"explicit\", values = [0.1] }\n";
    let head = "seed = 8\nreplicates = 2000\n";
    let thomas = "[process]\nkind = \"thomas\"\nparent_intensity = 25.0\noffspring_mean = 4.0\nsigma = 0.05\n";
    let adaptive = "[kernel]\ngamma = 2.0\n[estimator]\nkind = \"adaptive\"\n";
    let constant = "[model]\nfamily = \"constant\"\na = 100.0\n";
    vec![
        ("Poisson constant fixed", format!("{head}{constant}{design}")),
        ("Poisson constant adaptive", format!("{head}{constant}{adaptive}{design}")),
        ("Poisson inhomogeneous fixed", format!("{head}{POISSON_LOGLIN_2D}{design}")),
        ("Poisson inhomogeneous adaptive", format!("{head}{POISSON_LOGLIN_2D}{adaptive}{design}")),
        ("Thomas fixed", format!("{head}{thomas}{design}")),
        ("Thomas adaptive", format!("{head}{thomas}{adaptive}{design}")),
    ]
}

fn criterion_8() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, src) in consistency_configs() {
        let config = ExperimentConfig::from_toml_str(&src).map_err(err)?;
        let report = run_bias_variance_experiment(&config).map_err(err)?;
        let r = &report.records[0];
        let (mz, vz) = (r.mean_z.unwrap_or(f64::NAN), r.variance_z.unwrap_or(f64::NAN));
        let mut pass = mz.abs() <= 3.0 && vz.abs() <= 3.0;
        let mut extra = String::new();
        if name.starts_with("Thomas") {
            let single = r.oracle_variance_single.unwrap_or(f64::NAN);
            pass &= r.mc_variance > single;
            extra = format!(", MC variance {:.4} > Poisson term {single:.4}", r.mc_variance);
        }
        ok &= pass;
        lines.push(format!("{name}: mean z {mz:+.2}, variance z {vz:+.2}{extra}"));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn criterion_9() -> Outcome {
    let design = "[design]\nn = [100, 1000, 10000]\nbandwidth = { rule = \"power\", scale = 0.15, exponent = -0.1666666666666667 }\n";
    let configs = [
        ("Poisson constant fixed", format!("seed = 9\nreplicates = 4000\n[model]\nfamily = \"constant\"\na = 100.0\n{design}x0 = [[0.5, 0.5]]\n")),
        ("Poisson inhomogeneous fixed", format!("seed = 10\nreplicates = 4000\n{POISSON_LOGLIN_2D}{design}x0 = [[0.5, 0.5]]\n")),
        (
            "Poisson inhomogeneous adaptive",
            format!("seed = 11\nreplicates = 4000\n{POISSON_LOGLIN_2D}[kernel]\ngamma = 6.0\n[estimator]\nkind = \"adaptive\"\n{design}x0 = [[0.5, 0.5]]\n"),
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, src) in configs {
        let config = ExperimentConfig::from_toml_str(&src).map_err(err)?;
        let report = run_op_check(&config).map_err(err)?;
        let vars: Vec<String> = report.rows.iter().map(|r| format!("{:.3}", r.z_variance)).collect();
        let q95: Vec<String> = report.rows.iter().map(|r| format!("{:.3}", r.abs_z_quantiles[2].value)).collect();
        let pass = report.all_stable() && report.all_unit_variance();
        ok &= pass;
        lines.push(format!(
            "{name}: stable {}, Var(Z) {vars:?}{}, |Z| q95 {q95:?}",
            report.all_stable(),
            match report.unit_variance[0] {
                Some(v) => format!(" in [0.9, 1.1] {v}"),
                None => String::new(),
            }
        ));
    }
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn criterion_10() -> Outcome {
    let src = format!(
        "seed = 21\nreplicates = 500\n{POISSON_LOGLIN_2D}[design]\nx0 = [[0.5, 0.5], [0.3, 0.6]]\nn = [10, 100]\nbandwidth = {{ rule = \"explicit\", values = [0.08, 0.15] }}\n"
    );
    let config = ExperimentConfig::from_toml_str(&src).map_err(err)?;
    let bias_variance = |threads| -> Result<Vec<u8>, String> {
        let report = with_threads(Some(threads), || run_bias_variance_experiment(&config)).map_err(err)?.map_err(err)?;
        let mut out = Vec::new();
        write_csv(&report.records, &mut out).map_err(err)?;
        Ok(out)
    };
    let op_src = src.replace("n = [10, 100]", "n = [10, 40]").replace("values = [0.08, 0.15]", "values = [0.1]");
    let op_config = ExperimentConfig::from_toml_str(&op_src).map_err(err)?;
    let op_check = |threads| -> Result<Vec<u8>, String> {
        let report = with_threads(Some(threads), || run_op_check(&op_config)).map_err(err)?.map_err(err)?;
        let mut out = Vec::new();
        write_csv(&report.csv_rows(), &mut out).map_err(err)?;
        Ok(out)
    };
    let (a, b, c) = (bias_variance(1)?, bias_variance(1)?, bias_variance(4)?);
    let (p, q) = (op_check(1)?, op_check(1)?);
    let detail = format!(
        "bias-variance CSV {} bytes, op-check CSV {} bytes; reruns identical {}, 4 threads identical {}",
        a.len(),
        p.len(),
        a == b && p == q,
        a == c
    );
    if a == b && p == q && a == c && !a.contains(&b'\r') {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("kernel constants vs quadrature", criterion_1),
        ("integration-by-parts identities", criterion_2),
        ("fixed bias coefficient", criterion_3),
        ("fixed variance", criterion_4),
        ("adaptive bias order", criterion_5),
        ("closed-form adaptive coefficient", criterion_6),
        ("optimal bandwidth rates", criterion_7),
        ("Monte Carlo vs exact moments", criterion_8),
        ("O_P standardisation", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.ends_with(&format!(" {f}"))) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} ({name}): PASS [{secs:.1} s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} ({name}): FAIL [{secs:.1} s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
