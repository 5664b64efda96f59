//! Closed-form kernel constants and integration-by-parts identities checked
//! against deterministic quadrature.

use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::{KernelSpec, MAX_DERIVATIVE_ORDER};
use crate::quadrature::{integrate_unit_ball, QuadOptions};

pub const MOMENT_REL_TOL: f64 = 1e-8;
pub const Q_PLANAR_REL_TOL: f64 = 1e-12;
pub const IBP_ABS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    /// Unique key, e.g. `moment:V[d=2,gamma=1]`.
    pub name: String,
    pub family: &'static str,
    pub d: usize,
    pub gamma: f64,
    pub expected: f64,
    pub computed: f64,
    /// Relative or absolute error, matching `kind`.
    pub error: f64,
    pub tolerance: f64,
    pub kind: Tolerance,
    pub passed: bool,
    /// Quadrature failure, if any.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub seconds: f64,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&IdentityCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn family_passed(&self, family: &str) -> bool {
        self.checks.iter().filter(|c| c.family == family).all(|c| c.passed)
    }
}

/// Multiplies the closed-form value of the check named `check` by `factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityMutation {
    pub check: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySuiteOptions {
    pub dims: Vec<usize>,
    pub gammas: Vec<f64>,
    pub quad: QuadOptions,
    pub mutation: Option<IdentityMutation>,
}

impl Default for IdentitySuiteOptions {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            gammas: vec![0.0, 1.0, 2.0, 3.0, 5.0, 6.0],
            quad: QuadOptions {
                tol: 1e-12,
                min_level: 0,
                max_level: 4,
            },
            mutation: None,
        }
    }
}

/// What a check integrates over the unit ball.
#[derive(Debug, Clone)]
enum Integrand {
    /// `∫ u^α κ^p` for `p ∈ {1, 2}`.
    KernelPower { monomial: Vec<usize>, power: i32 },
    /// `Σ ∫ u^α ∂^β κ`.
    Partials(Vec<(Vec<usize>, Vec<usize>)>),
    /// `∫ u^4 g_u^{(m)}(1)` in one dimension.
    GuMoment(usize),
    /// Closed forms compared with each other, no quadrature.
    Value(f64),
}

struct Spec {
    family: &'static str,
    label: String,
    d: usize,
    gamma: f64,
    expected: f64,
    kind: Tolerance,
    tolerance: f64,
    integrand: Integrand,
}

fn unit(d: usize, parts: &[(usize, usize)]) -> Vec<usize> {
    let mut v = vec![0; d];
    for &(i, p) in parts {
        v[i] += p;
    }
    v
}

fn ibp(
    out: &mut Vec<Spec>,
    family: &'static str,
    label: &str,
    kernel: &KernelSpec<f64>,
    terms: Vec<(Vec<usize>, Vec<usize>)>,
    expected: f64,
) {
    let order = terms.iter().map(|(_, b)| b.iter().sum::<usize>()).max().unwrap_or(0);
    if kernel.check_smoothness(order).is_err() {
        return;
    }
    out.push(Spec {
        family,
        label: label.to_string(),
        d: kernel.dim(),
        gamma: kernel.gamma(),
        expected,
        kind: Tolerance::Absolute,
        tolerance: IBP_ABS_TOL,
        integrand: Integrand::Partials(terms),
    });
}

fn specs_for(d: usize, gamma: f64) -> Vec<Spec> {
    let kernel = KernelSpec::new(d, gamma).expect("valid grid");
    let m = kernel.moments();
    let (i, j, k) = (0, 1, 2);
    let mut out = Vec::new();
    let moment = |label: &str, expected: f64, integrand: Integrand| Spec {
        family: "moment",
        label: label.to_string(),
        d,
        gamma,
        expected,
        kind: Tolerance::Relative,
        tolerance: MOMENT_REL_TOL,
        integrand,
    };
    let kp = |monomial: Vec<usize>, power: i32| Integrand::KernelPower { monomial, power };
    out.push(moment("c", m.c, kp(vec![0; d], 0)));
    out.push(moment("Q", m.q, kp(vec![0; d], 2)));
    out.push(moment("V", m.v, kp(unit(d, &[(i, 2)]), 1)));
    out.push(moment("V4", m.v4, kp(unit(d, &[(i, 4)]), 1)));
    if d >= 2 {
        out.push(moment("V2", m.v2().expect("d >= 2"), kp(unit(d, &[(i, 2), (j, 2)]), 1)));
    }
    if d == 2 {
        let planar = (gamma + 1.0).powi(2) / ((2.0 * gamma + 1.0) * std::f64::consts::PI);
        out.push(Spec {
            family: "moment",
            label: "Q planar form".to_string(),
            d,
            gamma,
            expected: planar,
            kind: Tolerance::Relative,
            tolerance: Q_PLANAR_REL_TOL,
            integrand: Integrand::Value(m.q),
        });
    }

    let one = |mono: &[(usize, usize)], der: &[(usize, usize)]| vec![(unit(d, mono), unit(d, der))];
    let v = m.v;
    let v4 = m.v4;
    let df = d as f64;

    // first-order partials
    ibp(&mut out, "ibp1", "u_i D_i", &kernel, one(&[(i, 1)], &[(i, 1)]), -1.0);
    ibp(&mut out, "ibp1", "u_i^2 D_i", &kernel, one(&[(i, 2)], &[(i, 1)]), 0.0);
    ibp(&mut out, "ibp1", "u_i^3 D_i", &kernel, one(&[(i, 3)], &[(i, 1)]), -3.0 * v);
    if d >= 2 {
        ibp(&mut out, "ibp1", "u_j D_i", &kernel, one(&[(j, 1)], &[(i, 1)]), 0.0);
        ibp(&mut out, "ibp1", "u_i u_j D_i", &kernel, one(&[(i, 1), (j, 1)], &[(i, 1)]), 0.0);
        ibp(&mut out, "ibp1", "u_i u_j^2 D_i", &kernel, one(&[(i, 1), (j, 2)], &[(i, 1)]), -v);
        let agg = (0..d).map(|l| (unit(d, &[(i, 1), (j, 1), (l, 1)]), unit(d, &[(l, 1)]))).collect();
        ibp(&mut out, "ibp1", "u_i u_j sum_k u_k D_k", &kernel, agg, 0.0);
    }
    let agg = (0..d).map(|l| (unit(d, &[(i, 2), (l, 1)]), unit(d, &[(l, 1)]))).collect();
    ibp(&mut out, "ibp1", "u_i^2 sum_k u_k D_k", &kernel, agg, -(df + 2.0) * v);

    // second-order partials
    ibp(&mut out, "ibp2", "u_i^4 D_ii", &kernel, one(&[(i, 4)], &[(i, 2)]), 12.0 * v);
    if d >= 2 {
        ibp(&mut out, "ibp2", "u_i^3 u_j D_ij", &kernel, one(&[(i, 3), (j, 1)], &[(i, 1), (j, 1)]), 3.0 * v);
        ibp(&mut out, "ibp2", "u_i^2 u_j^2 D_jj", &kernel, one(&[(i, 2), (j, 2)], &[(j, 2)]), 2.0 * v);
        let agg = (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| (unit(d, &[(i, 1), (j, 1), (a, 1), (b, 1)]), unit(d, &[(a, 1), (b, 1)])))
            .collect();
        ibp(&mut out, "ibp2", "u_i u_j sum_kl u_k u_l D_kl", &kernel, agg, 0.0);
    }
    if d >= 3 {
        ibp(&mut out, "ibp2", "u_i^2 u_j u_k D_jk", &kernel, one(&[(i, 2), (j, 1), (k, 1)], &[(j, 1), (k, 1)]), v);
    }
    let agg = (0..d)
        .flat_map(|a| (0..d).map(move |b| (a, b)))
        .map(|(a, b)| (unit(d, &[(i, 2), (a, 1), (b, 1)]), unit(d, &[(a, 1), (b, 1)])))
        .collect();
    ibp(&mut out, "ibp2", "u_i^2 sum_kl u_k u_l D_kl", &kernel, agg, (df + 2.0) * (df + 3.0) * v);

    // fourth moments against derivatives up to order four
    ibp(&mut out, "ibp4", "u_i^5 D_i", &kernel, one(&[(i, 5)], &[(i, 1)]), -5.0 * v4);
    ibp(&mut out, "ibp4", "u_i^6 D_ii", &kernel, one(&[(i, 6)], &[(i, 2)]), 30.0 * v4);
    ibp(&mut out, "ibp4", "u_i^7 D_iii", &kernel, one(&[(i, 7)], &[(i, 3)]), -210.0 * v4);
    ibp(&mut out, "ibp4", "u_i^8 D_iiii", &kernel, one(&[(i, 8)], &[(i, 4)]), 1680.0 * v4);

    if d == 2 {
        let v2 = m.v2().expect("d = 2");
        type Row<'a> = (&'a str, &'a [(usize, usize)], &'a [(usize, usize)], f64);
        let table: [Row; 18] = [
            ("u_i^4 u_j D_j", &[(i, 4), (j, 1)], &[(j, 1)], -v4),
            ("u_i^3 u_j^2 D_i", &[(i, 3), (j, 2)], &[(i, 1)], -3.0 * v2),
            ("u_i^5 u_j D_ij", &[(i, 5), (j, 1)], &[(i, 1), (j, 1)], 5.0 * v4),
            ("u_i^4 u_j^2 D_jj", &[(i, 4), (j, 2)], &[(j, 2)], 2.0 * v4),
            ("u_i^4 u_j^2 D_ii", &[(i, 4), (j, 2)], &[(i, 2)], 12.0 * v2),
            ("u_i^3 u_j^3 D_ij", &[(i, 3), (j, 3)], &[(i, 1), (j, 1)], 9.0 * v2),
            ("u_i^6 u_j D_iij", &[(i, 6), (j, 1)], &[(i, 2), (j, 1)], -30.0 * v4),
            ("u_i^5 u_j^2 D_ijj", &[(i, 5), (j, 2)], &[(i, 1), (j, 2)], -10.0 * v4),
            ("u_i^4 u_j^3 D_jjj", &[(i, 4), (j, 3)], &[(j, 3)], -6.0 * v4),
            ("u_i^5 u_j^2 D_iii", &[(i, 5), (j, 2)], &[(i, 3)], -60.0 * v2),
            ("u_i^4 u_j^3 D_iij", &[(i, 4), (j, 3)], &[(i, 2), (j, 1)], -36.0 * v2),
            ("u_i^7 u_j D_iiij", &[(i, 7), (j, 1)], &[(i, 3), (j, 1)], 210.0 * v4),
            ("u_i^6 u_j^2 D_iijj", &[(i, 6), (j, 2)], &[(i, 2), (j, 2)], 60.0 * v4),
            ("u_i^5 u_j^3 D_ijjj", &[(i, 5), (j, 3)], &[(i, 1), (j, 3)], 30.0 * v4),
            ("u_i^4 u_j^4 D_jjjj", &[(i, 4), (j, 4)], &[(j, 4)], 24.0 * v4),
            ("u_i^6 u_j^2 D_iiii", &[(i, 6), (j, 2)], &[(i, 4)], 360.0 * v2),
            ("u_i^5 u_j^3 D_iiij", &[(i, 5), (j, 3)], &[(i, 3), (j, 1)], 180.0 * v2),
            ("u_i^4 u_j^4 D_iijj", &[(i, 4), (j, 4)], &[(i, 2), (j, 2)], 144.0 * v2),
        ];
        for (label, mono, der, expected) in table {
            ibp(&mut out, "planar", label, &kernel, one(mono, der), expected);
        }
    }

    if d == 1 && kernel.check_smoothness(4).is_ok() {
        for (order, factor) in [(1, -2.0), (2, 6.0), (3, -24.0), (4, 120.0)] {
            out.push(Spec {
                family: "gu",
                label: format!("u^4 g_u^({order})(1)"),
                d,
                gamma,
                expected: factor * v4,
                kind: Tolerance::Absolute,
                tolerance: IBP_ABS_TOL,
                integrand: Integrand::GuMoment(order),
            });
        }
    }
    out
}

fn compute(spec: &Spec, quad: QuadOptions) -> Result<f64, String> {
    let kernel = KernelSpec::new(spec.d, spec.gamma).map_err(|e| e.to_string())?;
    let d = spec.d;
    match &spec.integrand {
        Integrand::Value(v) => Ok(*v),
        Integrand::KernelPower { monomial, power } => {
            let eval = kernel.evaluator();
            let r = integrate_unit_ball(d, quad, |u: &[f64]| {
                let base = crate::kernel::monomial_value(monomial, u);
                let k = match power {
                    0 => (1.0 - u.iter().map(|x| x * x).sum::<f64>()).max(0.0).powf(spec.gamma),
                    p => eval.eval(u).powi(*p),
                };
                [base * k]
            });
            r.map(|r| r.values[0]).map_err(|e| e.to_string())
        }
        Integrand::Partials(terms) => {
            let mut total = 0.0;
            for (mono, der) in terms {
                total += kernel.quad_monomial_vs_derivative(mono, der, quad).map_err(|e| e.to_string())?;
            }
            Ok(total)
        }
        Integrand::GuMoment(order) => {
            let table = kernel.partials_table(MAX_DERIVATIVE_ORDER.min(4)).map_err(|e| e.to_string())?;
            let mut failure = None;
            let r = integrate_unit_ball(1, quad, |u: &[f64]| match table.gu_derivative(u, *order, 1.0) {
                Ok(g) => [u[0].powi(4) * g],
                Err(e) => {
                    failure.get_or_insert(e.to_string());
                    [0.0]
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            r.map(|r| r.values[0]).map_err(|e| e.to_string())
        }
    }
}

fn fmt_gamma(g: f64) -> String {
    if g.fract() == 0.0 {
        format!("{g:.0}")
    } else {
        format!("{g}")
    }
}

/// Runs every identity on the `(d, γ)` grid, each only where the kernel is
/// smooth enough for the derivatives involved.
pub fn run_identity_suite(opts: &IdentitySuiteOptions) -> IdentityReport {
    let start = std::time::Instant::now();
    let specs: Vec<Spec> = opts
        .dims
        .iter()
        .flat_map(|&d| opts.gammas.iter().map(move |&g| (d, g)))
        .flat_map(|(d, g)| specs_for(d, g))
        .collect();
    let checks = specs
        .par_iter()
        .map(|spec| {
            let name = format!("{}:{}[d={},gamma={}]", spec.family, spec.label, spec.d, fmt_gamma(spec.gamma));
            let mut expected = spec.expected;
            if let Some(m) = &opts.mutation {
                if m.check == name {
                    expected *= m.factor;
                }
            }
            let (computed, note) = match compute(spec, opts.quad) {
                Ok(v) => (v, None),
                Err(e) => (f64::NAN, Some(e)),
            };
            let error = match spec.kind {
                Tolerance::Relative => ((computed - expected) / expected).abs(),
                Tolerance::Absolute => (computed - expected).abs(),
            };
            IdentityCheck {
                name,
                family: spec.family,
                d: spec.d,
                gamma: spec.gamma,
                expected,
                computed,
                error,
                tolerance: spec.tolerance,
                kind: spec.kind,
                passed: error < spec.tolerance,
                note,
            }
        })
        .collect();
    IdentityReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_passes_and_names_are_unique() {
        let opts = IdentitySuiteOptions {
            dims: vec![1, 2],
            gammas: vec![1.0, 5.0],
            ..Default::default()
        };
        let report = run_identity_suite(&opts);
        if let Some(c) = report.failures().first() {
            panic!("{} expected {} got {} ({:?})", c.name, c.expected, c.computed, c.note);
        }
        let mut names: Vec<_> = report.checks.iter().map(|c| c.name.clone()).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
        assert!(report.checks.iter().any(|c| c.name == "planar:u_i^5 u_j D_ij[d=2,gamma=5]"));
        assert!(report.checks.iter().any(|c| c.name == "gu:u^4 g_u^(4)(1)[d=1,gamma=5]"));
    }

    #[test]
    fn identities_skip_insufficiently_smooth_kernels() {
        let specs = specs_for(2, 2.0);
        let orders: Vec<usize> = specs
            .iter()
            .filter_map(|s| match &s.integrand {
                Integrand::Partials(t) => Some(t.iter().map(|(_, b)| b.iter().sum::<usize>()).max().unwrap()),
                _ => None,
            })
            .collect();
        assert!(!orders.is_empty());
        assert!(orders.iter().all(|&o| o < 2));
        assert_eq!(specs.iter().filter(|s| s.family == "planar").count(), 2);
    }
}
