//! Experiment configuration: a TOML file in which every field is optional.
//!
//! ```toml
//! seed = 0                 # base seed; grid point k draws from stream k
//! threads = 4              # worker threads (default: all cores)
//! output = "infill-out"    # output directory
//! replicates = 500         # Monte Carlo replicates per grid point
//!
//! [model]                  # default: constant a = 100 on the unit square
//! family = "log_polynomial"            # constant | log_polynomial | gaussian_bump
//! lower = [-1.0, -1.0]
//! upper = [1.0, 1.0]
//! terms = [{ exponents = [0, 0], coefficient = 4.0 },
//!          { exponents = [1, 0], coefficient = 0.8 }]
//! # constant: a; gaussian_bump: a, b, center, scale
//!
//! [process]                # default: poisson
//! kind = "thomas"          # poisson | thomas
//! parent_intensity = 25.0
//! offspring_mean = 4.0
//! sigma = 0.05
//!
//! [kernel]
//! gamma = 1.0              # dimension comes from the window
//!
//! [estimator]
//! kind = "adaptive"        # fixed (default) | adaptive
//! weights = "oracle"       # oracle (default) | pilot
//! pilot_bandwidth = "auto" # or a number
//! pilot_floor = 1e-3
//!
//! [design]
//! x0 = [[0.0, 0.0]]        # default: window centre
//! n = [100, 1000, 10000]
//! sampler = "local"        # local (default) | full
//! bandwidth = { rule = "explicit", values = [0.1] }
//! # rules: explicit | h_star_fixed | h_star_adaptive | mse_argmin
//! #        | power (h = scale * n^exponent)
//!
//! [rate]
//! backend = "oracle"       # oracle (default) | monte_carlo
//! h_min = 1e-3
//! grid_points = 40
//! ```

use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use crate::estimate::{PilotBandwidth, DEFAULT_PILOT_FLOOR};
use crate::kernel::KernelSpec;
use crate::model::{AbramsonWeight, IntensityFamily, IntensityModel, PairCorrelationModel, Polynomial, Window};

/// A configuration problem located in the source text (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ProcessSpec {
    Poisson,
    Thomas {
        parent_intensity: f64,
        offspring_mean: f64,
        sigma: f64,
    },
}

impl ProcessSpec {
    pub fn pair_correlation(&self) -> PairCorrelationModel<f64> {
        match *self {
            Self::Poisson => PairCorrelationModel::Poisson,
            Self::Thomas {
                parent_intensity,
                offspring_mean,
                sigma,
            } => PairCorrelationModel::Thomas {
                parent_intensity,
                offspring_mean,
                sigma,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    Fixed,
    AdaptiveOracle,
    AdaptivePilot { bandwidth: PilotBandwidth<f64>, floor: f64 },
}

impl EstimatorSpec {
    pub fn is_adaptive(&self) -> bool {
        !matches!(self, Self::Fixed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::AdaptiveOracle => "adaptive-oracle",
            Self::AdaptivePilot { .. } => "adaptive-pilot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    Explicit(Vec<f64>),
    HStarFixed,
    HStarAdaptive,
    MseArgmin,
    Power { scale: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Local,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateBackend {
    Oracle,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    pub backend: RateBackend,
    pub h_min: f64,
    pub grid_points: usize,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub output: PathBuf,
    pub replicates: usize,
    pub model: IntensityModel<f64>,
    pub process: ProcessSpec,
    pub kernel: KernelSpec<f64>,
    pub estimator: EstimatorSpec,
    pub x0: Vec<Vec<f64>>,
    pub n: Vec<usize>,
    pub bandwidth: BandwidthRule,
    pub sampler: SamplerKind,
    pub rate: RateOptions,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<Spanned<u64>>,
    threads: Option<Spanned<usize>>,
    output: Option<Spanned<String>>,
    replicates: Option<Spanned<usize>>,
    model: Option<Spanned<RawModel>>,
    process: Option<Spanned<RawProcess>>,
    kernel: Option<Spanned<RawKernel>>,
    estimator: Option<Spanned<RawEstimator>>,
    design: Option<Spanned<RawDesign>>,
    rate: Option<Spanned<RawRate>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    family: Option<Spanned<String>>,
    lower: Option<Spanned<Vec<f64>>>,
    upper: Option<Spanned<Vec<f64>>>,
    a: Option<Spanned<f64>>,
    b: Option<Spanned<f64>>,
    center: Option<Spanned<Vec<f64>>>,
    scale: Option<Spanned<f64>>,
    terms: Option<Spanned<Vec<RawTerm>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    exponents: Vec<usize>,
    coefficient: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcess {
    kind: Option<Spanned<String>>,
    parent_intensity: Option<Spanned<f64>>,
    offspring_mean: Option<Spanned<f64>>,
    sigma: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    gamma: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawPilotBandwidth {
    Value(f64),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    kind: Option<Spanned<String>>,
    weights: Option<Spanned<String>>,
    pilot_bandwidth: Option<Spanned<RawPilotBandwidth>>,
    pilot_floor: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBandwidth {
    rule: String,
    values: Option<Vec<f64>>,
    scale: Option<f64>,
    exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    x0: Option<Spanned<Vec<Vec<f64>>>>,
    n: Option<Spanned<Vec<usize>>>,
    sampler: Option<Spanned<String>>,
    bandwidth: Option<Spanned<RawBandwidth>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    backend: Option<Spanned<String>>,
    h_min: Option<Spanned<f64>>,
    grid_points: Option<Spanned<usize>>,
}

struct Locator<'a> {
    src: &'a str,
}

impl Locator<'_> {
    fn at(&self, offset: usize, message: impl Into<String>) -> ConfigError {
        let offset = offset.min(self.src.len());
        let before = &self.src[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
        ConfigError {
            line,
            column,
            message: message.into(),
        }
    }

    fn err<T>(&self, s: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        self.at(s.span().start, message)
    }
}

fn check_positive(loc: &Locator<'_>, v: &Spanned<f64>, name: &str) -> Result<f64, ConfigError> {
    let x = *v.get_ref();
    if !(x > 0.0) || !x.is_finite() {
        return Err(loc.err(v, format!("{name} must be positive and finite, got {x}")));
    }
    Ok(x)
}

fn required<'a, T>(loc: &Locator<'_>, section: &Spanned<impl Sized>, v: &'a Option<Spanned<T>>, what: &str) -> Result<&'a Spanned<T>, ConfigError> {
    v.as_ref().ok_or_else(|| loc.err(section, format!("missing field `{what}`")))
}

impl ExperimentConfig {
    /// The configuration of an empty file.
    pub fn default_config() -> Self {
        Self::from_toml_str("").expect("defaults are valid")
    }

    pub fn from_toml_str(src: &str) -> Result<Self, ConfigError> {
        let loc = Locator { src };
        let raw: RawConfig = toml::from_str(src).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            loc.at(offset, e.message().trim().to_string())
        })?;
        build(&loc, raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src).map_err(|e| format!("{}: {e}", path.display()).into())
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn pair_correlation(&self) -> PairCorrelationModel<f64> {
        self.process.pair_correlation()
    }
}

fn build(loc: &Locator<'_>, raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let seed = raw.seed.map_or(0, |s| s.into_inner());
    let threads = match raw.threads {
        Some(t) if *t.get_ref() == 0 => return Err(loc.err(&t, "threads must be at least 1")),
        t => t.map(|t| t.into_inner()),
    };
    let output = PathBuf::from(raw.output.map_or_else(|| "infill-out".to_string(), |o| o.into_inner()));
    let replicates = match raw.replicates {
        Some(r) if *r.get_ref() < 2 => return Err(loc.err(&r, "replicates must be at least 2")),
        r => r.map_or(500, |r| r.into_inner()),
    };

    let process = match &raw.process {
        None => ProcessSpec::Poisson,
        Some(p) => {
            let inner = p.get_ref();
            match inner.kind.as_ref().map(|k| k.get_ref().as_str()).unwrap_or("poisson") {
                "poisson" => ProcessSpec::Poisson,
                "thomas" => {
                    let kp = check_positive(loc, required(loc, p, &inner.parent_intensity, "parent_intensity")?, "parent_intensity")?;
                    let mu = required(loc, p, &inner.offspring_mean, "offspring_mean")?;
                    if !(*mu.get_ref() >= 0.0) || !mu.get_ref().is_finite() {
                        return Err(loc.err(mu, "offspring_mean must be non-negative and finite"));
                    }
                    let sigma = check_positive(loc, required(loc, p, &inner.sigma, "sigma")?, "sigma")?;
                    ProcessSpec::Thomas {
                        parent_intensity: kp,
                        offspring_mean: *mu.get_ref(),
                        sigma,
                    }
                }
                other => {
                    return Err(loc.err(
                        inner.kind.as_ref().expect("kind present"),
                        format!("unknown process kind `{other}` (expected poisson or thomas)"),
                    ))
                }
            }
        }
    };

    let model = build_model(loc, raw.model.as_ref(), &process)?;
    let d = model.dim();

    let gamma = raw
        .kernel
        .as_ref()
        .and_then(|k| k.get_ref().gamma.as_ref())
        .map_or(Ok(1.0), |g| {
            KernelSpec::new(d, *g.get_ref()).map(|_| *g.get_ref()).map_err(|e| loc.err(g, e.to_string()))
        })?;
    let kernel = KernelSpec::new(d, gamma).map_err(|e| loc.at(0, e.to_string()))?;

    let estimator = match &raw.estimator {
        None => EstimatorSpec::Fixed,
        Some(e) => {
            let inner = e.get_ref();
            match inner.kind.as_ref().map(|k| k.get_ref().as_str()).unwrap_or("fixed") {
                "fixed" => EstimatorSpec::Fixed,
                "adaptive" => match inner.weights.as_ref().map(|w| w.get_ref().as_str()).unwrap_or("oracle") {
                    "oracle" => EstimatorSpec::AdaptiveOracle,
                    "pilot" => {
                        let bandwidth = match &inner.pilot_bandwidth {
                            None => PilotBandwidth::Auto,
                            Some(s) => match s.get_ref() {
                                RawPilotBandwidth::Word(w) if w == "auto" => PilotBandwidth::Auto,
                                RawPilotBandwidth::Value(v) if *v > 0.0 && v.is_finite() => PilotBandwidth::Fixed(*v),
                                _ => return Err(loc.err(s, "pilot_bandwidth must be \"auto\" or a positive number")),
                            },
                        };
                        let floor = match &inner.pilot_floor {
                            None => DEFAULT_PILOT_FLOOR,
                            Some(f) if *f.get_ref() > 0.0 && *f.get_ref() <= 1.0 => *f.get_ref(),
                            Some(f) => return Err(loc.err(f, "pilot_floor must lie in (0, 1]")),
                        };
                        EstimatorSpec::AdaptivePilot { bandwidth, floor }
                    }
                    other => {
                        return Err(loc.err(
                            inner.weights.as_ref().expect("weights present"),
                            format!("unknown weights `{other}` (expected oracle or pilot)"),
                        ))
                    }
                },
                other => {
                    return Err(loc.err(
                        inner.kind.as_ref().expect("kind present"),
                        format!("unknown estimator kind `{other}` (expected fixed or adaptive)"),
                    ))
                }
            }
        }
    };

    let design = raw.design.as_ref();
    let design_inner = design.map(|d| d.get_ref());
    let x0 = match design_inner.and_then(|d| d.x0.as_ref()) {
        None => vec![model
            .window()
            .lower()
            .iter()
            .zip(model.window().upper())
            .map(|(l, u)| 0.5 * (l + u))
            .collect()],
        Some(s) => {
            if s.get_ref().is_empty() {
                return Err(loc.err(s, "x0 list must not be empty"));
            }
            for p in s.get_ref() {
                if p.len() != d {
                    return Err(loc.err(s, format!("every x0 must have {d} coordinates, got {}", p.len())));
                }
                if !model.window().contains(p) {
                    return Err(loc.err(s, format!("x0 {p:?} lies outside the window")));
                }
            }
            s.get_ref().clone()
        }
    };
    let n = match design_inner.and_then(|d| d.n.as_ref()) {
        None => vec![100, 1000, 10_000],
        Some(s) => {
            let v = s.get_ref();
            if v.is_empty() || v[0] == 0 {
                return Err(loc.err(s, "n grid must be non-empty with entries >= 1"));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(loc.err(s, "n grid must be strictly increasing"));
            }
            v.clone()
        }
    };
    let sampler = match design_inner.and_then(|d| d.sampler.as_ref()) {
        None => SamplerKind::Local,
        Some(s) => match s.get_ref().as_str() {
            "local" => SamplerKind::Local,
            "full" => SamplerKind::Full,
            other => return Err(loc.err(s, format!("unknown sampler `{other}` (expected local or full)"))),
        },
    };
    let bandwidth = match design_inner.and_then(|d| d.bandwidth.as_ref()) {
        None => BandwidthRule::Explicit(vec![0.1]),
        Some(s) => {
            let b = s.get_ref();
            match b.rule.as_str() {
                "explicit" => {
                    let v = b.values.clone().unwrap_or_default();
                    if v.is_empty() || v.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
                        return Err(loc.err(s, "explicit bandwidths must be a non-empty list of positive numbers"));
                    }
                    BandwidthRule::Explicit(v)
                }
                "h_star_fixed" => BandwidthRule::HStarFixed,
                "h_star_adaptive" => BandwidthRule::HStarAdaptive,
                "mse_argmin" => BandwidthRule::MseArgmin,
                "power" => match (b.scale, b.exponent) {
                    (Some(scale), Some(exponent)) if scale > 0.0 && exponent.is_finite() => {
                        BandwidthRule::Power { scale, exponent }
                    }
                    _ => return Err(loc.err(s, "power rule needs a positive `scale` and a finite `exponent`")),
                },
                other => {
                    return Err(loc.err(
                        s,
                        format!("unknown bandwidth rule `{other}` (expected explicit, h_star_fixed, h_star_adaptive, mse_argmin or power)"),
                    ))
                }
            }
        }
    };
    if let (BandwidthRule::Explicit(hs), Some(span)) = (&bandwidth, design.and_then(|d| d.get_ref().bandwidth.as_ref())) {
        let h_max = hs.iter().copied().fold(0.0, f64::max);
        for p in &x0 {
            let reach = match estimator {
                EstimatorSpec::AdaptiveOracle => {
                    let w = AbramsonWeight::new(model.clone(), p.clone()).map_err(|e| loc.err(span, e.to_string()))?;
                    h_max / w.min_on_window()
                }
                _ => h_max,
            };
            if !model.window().contains_ball(p, reach) {
                return Err(loc.err(
                    span,
                    format!(
                        "x0 {p:?} is closer than the kernel reach {reach:.4} to the window boundary (distance {:.4})",
                        model.window().boundary_distance(p)
                    ),
                ));
            }
        }
    }

    let rate = match &raw.rate {
        None => RateOptions {
            backend: RateBackend::Oracle,
            h_min: 1e-3,
            grid_points: 40,
        },
        Some(r) => {
            let inner = r.get_ref();
            let backend = match inner.backend.as_ref() {
                None => RateBackend::Oracle,
                Some(b) => match b.get_ref().as_str() {
                    "oracle" => RateBackend::Oracle,
                    "monte_carlo" => RateBackend::MonteCarlo,
                    other => return Err(loc.err(b, format!("unknown rate backend `{other}` (expected oracle or monte_carlo)"))),
                },
            };
            let h_min = inner.h_min.as_ref().map_or(Ok(1e-3), |h| check_positive(loc, h, "h_min"))?;
            let grid_points = match &inner.grid_points {
                Some(g) if *g.get_ref() < 5 => return Err(loc.err(g, "grid_points must be at least 5")),
                g => g.as_ref().map_or(40, |g| *g.get_ref()),
            };
            RateOptions {
                backend,
                h_min,
                grid_points,
            }
        }
    };

    Ok(ExperimentConfig {
        seed,
        threads,
        output,
        replicates,
        model,
        process,
        kernel,
        estimator,
        x0,
        n,
        bandwidth,
        sampler,
        rate,
    })
}

fn build_model(
    loc: &Locator<'_>,
    raw: Option<&Spanned<RawModel>>,
    process: &ProcessSpec,
) -> Result<IntensityModel<f64>, ConfigError> {
    let Some(section) = raw else {
        let a = match process {
            ProcessSpec::Thomas {
                parent_intensity,
                offspring_mean,
                ..
            } => parent_intensity * offspring_mean,
            ProcessSpec::Poisson => 100.0,
        };
        let family = IntensityFamily::Constant { a };
        return IntensityModel::new(family, Window::unit(2)).map_err(|e| loc.at(0, e.to_string()));
    };
    let m = section.get_ref();
    let window = match (&m.lower, &m.upper) {
        (None, None) => Window::unit(2),
        (Some(l), Some(u)) => {
            Window::new(l.get_ref().clone(), u.get_ref().clone()).map_err(|e| loc.err(l, e.to_string()))?
        }
        _ => return Err(loc.err(section, "window needs both `lower` and `upper`")),
    };
    let d = window.dim();
    let family_name = m.family.as_ref().map(|f| f.get_ref().as_str()).unwrap_or("constant");
    let family_span = m.family.as_ref().map_or(section.span().start, |f| f.span().start);
    let family = match family_name {
        "constant" => {
            let a = match (&m.a, process) {
                (Some(a), _) => check_positive(loc, a, "a")?,
                (
                    None,
                    ProcessSpec::Thomas {
                        parent_intensity,
                        offspring_mean,
                        ..
                    },
                ) => parent_intensity * offspring_mean,
                (None, ProcessSpec::Poisson) => 100.0,
            };
            IntensityFamily::Constant { a }
        }
        "log_polynomial" => {
            let terms = required(loc, section, &m.terms, "terms")?;
            let poly = Polynomial::from_terms(d, terms.get_ref().iter().map(|t| (t.exponents.clone(), t.coefficient)))
                .map_err(|e| loc.err(terms, e.to_string()))?;
            IntensityFamily::LogPolynomial { exponent: poly }
        }
        "gaussian_bump" => {
            let a = *required(loc, section, &m.a, "a")?.get_ref();
            let b = *required(loc, section, &m.b, "b")?.get_ref();
            let center = required(loc, section, &m.center, "center")?.get_ref().clone();
            let scale = check_positive(loc, required(loc, section, &m.scale, "scale")?, "scale")?;
            IntensityFamily::GaussianBump { a, b, center, scale }
        }
        other => {
            return Err(loc.at(
                family_span,
                format!("unknown model family `{other}` (expected constant, log_polynomial or gaussian_bump)"),
            ))
        }
    };
    if let ProcessSpec::Thomas {
        parent_intensity,
        offspring_mean,
        ..
    } = process
    {
        let expected = parent_intensity * offspring_mean;
        let ok = matches!(family, IntensityFamily::Constant { a } if (a - expected).abs() <= 1e-12 * expected.max(1.0));
        if !ok {
            return Err(loc.at(
                family_span,
                format!("a Thomas process has constant intensity parent_intensity * offspring_mean = {expected}"),
            ));
        }
        if d != 2 {
            return Err(loc.err(section, "the Thomas process needs a two-dimensional window"));
        }
    }
    IntensityModel::new(family, window).map_err(|e| loc.at(family_span, e.to_string()))
}
