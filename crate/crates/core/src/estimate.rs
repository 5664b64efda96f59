//! Fixed-bandwidth and Abramson-adaptive kernel intensity estimators.
//!
//! Both estimators sum kernel contributions over `Y_n` in replicate-major,
//! point-minor order with a single running accumulator and return
//! `(S / h^d) / n`. Large patterns go through a grid index; points outside
//! the kernel support contribute an exact zero, so both search paths give
//! the same bits.

use std::collections::HashMap;

use thiserror::Error;

use crate::asymptotics::h_star_fixed_from_values;
use crate::kernel::{KernelError, KernelEval, KernelSpec};
use crate::model::{AbramsonWeight, IntensityModel, ModelError};
use crate::scalar::Scalar;
use crate::simulate::{PointPattern, SuperposedSample};

/// Pattern size from which the grid index replaces the linear scan.
pub const INDEX_THRESHOLD: usize = 10_000;
/// Default relative floor `ε` for pilot estimates.
pub const DEFAULT_PILOT_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("pilot floor must lie in (0, 1], got {0}")]
    InvalidFloor(f64),
    #[error("kernel dimension {kernel} does not match pattern dimension {pattern}")]
    DimensionMismatch { kernel: usize, pattern: usize },
    #[error("pilot estimate is zero at x0, so the adaptive weights are undefined")]
    PilotZeroAtAnchor,
    #[error("number of replicates must be at least 1")]
    NoReplicates,
    #[error("request mode does not match the estimator ({0})")]
    WrongMode(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchStrategy {
    /// Linear scan below [`INDEX_THRESHOLD`] points, grid index above.
    #[default]
    Auto,
    BruteForce,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PilotBandwidth<T> {
    Fixed(T),
    /// Fixed-bandwidth optimum with plug-in `λ̂(x₀)` and `Σλ̂_ii(x₀)`, both
    /// estimated at the target bandwidth `h` (the Laplacian with a `γ = 3`
    /// kernel). Falls back to `h` when the estimated Laplacian is zero.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource<T> {
    /// `c(y) = √(λ(y)/λ(x₀))` from the true intensity.
    Oracle(IntensityModel<T>),
    /// `c(y) = √(max(λ̂(y), ε λ̂(x₀)) / λ̂(x₀))` with `λ̂` the fixed-bandwidth
    /// estimate at the pilot bandwidth.
    Pilot { bandwidth: PilotBandwidth<T>, floor: T },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorMode<T> {
    Fixed,
    Adaptive(WeightSource<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRequest<T> {
    pub x0: Vec<T>,
    pub h: T,
    pub kernel: KernelSpec<T>,
    pub mode: EstimatorMode<T>,
    pub search: SearchStrategy,
}

impl<T: Scalar> EstimateRequest<T> {
    pub fn fixed(x0: Vec<T>, h: T, kernel: KernelSpec<T>) -> Self {
        Self {
            x0,
            h,
            kernel,
            mode: EstimatorMode::Fixed,
            search: SearchStrategy::Auto,
        }
    }

    pub fn oracle(x0: Vec<T>, h: T, kernel: KernelSpec<T>, model: IntensityModel<T>) -> Self {
        Self {
            mode: EstimatorMode::Adaptive(WeightSource::Oracle(model)),
            ..Self::fixed(x0, h, kernel)
        }
    }

    pub fn pilot(x0: Vec<T>, h: T, kernel: KernelSpec<T>, bandwidth: PilotBandwidth<T>) -> Self {
        Self {
            mode: EstimatorMode::Adaptive(WeightSource::Pilot {
                bandwidth,
                floor: T::c(DEFAULT_PILOT_FLOOR),
            }),
            ..Self::fixed(x0, h, kernel)
        }
    }

    pub fn with_search(mut self, search: SearchStrategy) -> Self {
        self.search = search;
        self
    }

    fn validate(&self, pattern: &PointPattern<T>) -> Result<(), EstimateError> {
        check_bandwidth(self.h)?;
        if self.kernel.dim() != pattern.dim() {
            return Err(EstimateError::DimensionMismatch {
                kernel: self.kernel.dim(),
                pattern: pattern.dim(),
            });
        }
        pattern.window().check_point(&self.x0, "x0")?;
        Ok(())
    }
}

fn check_bandwidth<T: Scalar>(h: T) -> Result<(), EstimateError> {
    if !(h > T::zero()) || !h.is_finite() {
        return Err(EstimateError::InvalidBandwidth(h.to_f64_()));
    }
    Ok(())
}

/// Uniform grid of cubic cells over a flat coordinate buffer.
struct GridIndex<T> {
    d: usize,
    cell: T,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl<T: Scalar> GridIndex<T> {
    fn build(coords: &[T], d: usize, cell: T) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in coords.chunks_exact(d).enumerate() {
            let key = p.iter().map(|&v| (v / cell).floor().to_i64().unwrap_or(0)).collect();
            cells.entry(key).or_default().push(i);
        }
        Self { d, cell, cells }
    }

    /// Indices of all points within sup-distance `radius` of `x`, sorted
    /// (possibly with some further ones).
    fn query(&self, x: &[T], radius: T) -> Vec<usize> {
        let lo: Vec<i64> = x
            .iter()
            .map(|&v| ((v - radius) / self.cell).floor().to_i64().unwrap_or(i64::MIN))
            .collect();
        let hi: Vec<i64> = x
            .iter()
            .map(|&v| ((v + radius) / self.cell).floor().to_i64().unwrap_or(i64::MAX))
            .collect();
        let mut out = Vec::new();
        let mut key = lo.clone();
        loop {
            if let Some(ids) = self.cells.get(&key) {
                out.extend_from_slice(ids);
            }
            let mut j = 0;
            while j < self.d {
                key[j] += 1;
                if key[j] <= hi[j] {
                    break;
                }
                key[j] = lo[j];
                j += 1;
            }
            if j == self.d {
                break;
            }
        }
        out.sort_unstable();
        out
    }
}

/// Iterates the points that may lie within `radius` of a query.
struct Search<'a, T> {
    coords: &'a [T],
    d: usize,
    index: Option<GridIndex<T>>,
}

impl<'a, T: Scalar> Search<'a, T> {
    fn new(pattern: &'a PointPattern<T>, strategy: SearchStrategy, cell: T) -> Self {
        let d = pattern.dim();
        let use_grid = match strategy {
            SearchStrategy::Auto => pattern.len() >= INDEX_THRESHOLD,
            SearchStrategy::BruteForce => false,
            SearchStrategy::Grid => true,
        };
        Self {
            coords: pattern.coords(),
            d,
            index: use_grid.then(|| GridIndex::build(pattern.coords(), d, cell)),
        }
    }

    /// Running sum of `term(y)` over candidate points in index order.
    fn sum<F: FnMut(&[T]) -> T>(&self, x: &[T], radius: T, mut term: F) -> T {
        let mut acc = T::zero();
        match &self.index {
            None => {
                for y in self.coords.chunks_exact(self.d) {
                    acc = acc + term(y);
                }
            }
            Some(index) => {
                for i in index.query(x, radius) {
                    acc = acc + term(&self.coords[i * self.d..(i + 1) * self.d]);
                }
            }
        }
        acc
    }
}

/// Margin keeping the index search radius safely above the support radius.
fn inflate<T: Scalar>(r: T) -> T {
    r * T::c(1.0 + 1e-9)
}

#[inline]
fn fixed_term<T: Scalar>(eval: &KernelEval<T>, x0: &[T], y: &[T], h: T) -> T {
    let mut r2 = T::zero();
    for (&a, &b) in x0.iter().zip(y) {
        let u = (a - b) / h;
        r2 = r2 + u * u;
    }
    eval.at_sq_norm(r2)
}

#[inline]
fn adaptive_term<T: Scalar>(eval: &KernelEval<T>, x0: &[T], y: &[T], h: T, c: T, d: i32) -> T {
    let mut r2 = T::zero();
    for (&a, &b) in x0.iter().zip(y) {
        let u = (a - b) / h * c;
        r2 = r2 + u * u;
    }
    c.powi(d) * eval.at_sq_norm(r2)
}

fn normalise<T: Scalar>(sum: T, h: T, d: usize, n: usize) -> T {
    sum / h.powi(d as i32) / T::from_usize_(n)
}

fn fixed_with_search<T: Scalar>(search: &Search<'_, T>, kernel: &KernelSpec<T>, x0: &[T], h: T, n: usize) -> T {
    let eval = kernel.evaluator();
    let s = search.sum(x0, inflate(h), |y| fixed_term(&eval, x0, y, h));
    normalise(s, h, kernel.dim(), n)
}

/// `(1/(n h^d)) Σ_{y ∈ Y_n} κ((x₀ - y)/h)` on a pooled pattern of `n` replicates.
pub fn estimate_fixed_pooled<T: Scalar>(
    pattern: &PointPattern<T>,
    n: usize,
    req: &EstimateRequest<T>,
) -> Result<T, EstimateError> {
    if !matches!(req.mode, EstimatorMode::Fixed) {
        return Err(EstimateError::WrongMode("fixed estimator needs a fixed request"));
    }
    if n == 0 {
        return Err(EstimateError::NoReplicates);
    }
    req.validate(pattern)?;
    let search = Search::new(pattern, req.search, req.h);
    Ok(fixed_with_search(&search, &req.kernel, &req.x0, req.h, n))
}

pub fn estimate_fixed<T: Scalar>(sample: &SuperposedSample<T>, req: &EstimateRequest<T>) -> Result<T, EstimateError> {
    estimate_fixed_pooled(&sample.union(), sample.n(), req)
}

/// Bandwidth the pilot stage will use for this request.
pub fn resolve_pilot_bandwidth<T: Scalar>(
    pattern: &PointPattern<T>,
    n: usize,
    req: &EstimateRequest<T>,
) -> Result<T, EstimateError> {
    let bandwidth = match &req.mode {
        EstimatorMode::Adaptive(WeightSource::Pilot { bandwidth, .. }) => *bandwidth,
        _ => return Err(EstimateError::WrongMode("pilot bandwidth needs a pilot request")),
    };
    req.validate(pattern)?;
    match bandwidth {
        PilotBandwidth::Fixed(hp) => {
            check_bandwidth(hp)?;
            Ok(hp)
        }
        PilotBandwidth::Auto => {
            let d = req.kernel.dim();
            let search = Search::new(pattern, req.search, req.h);
            let lambda = fixed_with_search(&search, &req.kernel, &req.x0, req.h, n);
            let smooth = KernelSpec::new(d, T::c(3.0))?;
            let laplacian_terms: Vec<_> = (0..d)
                .map(|i| {
                    let mut mi = vec![0; d];
                    mi[i] = 2;
                    smooth.partial_expansion(&mi)
                })
                .collect::<Result<_, _>>()?;
            let h = req.h;
            let s = search.sum(&req.x0, inflate(h), |y| {
                let u: Vec<T> = req.x0.iter().zip(y).map(|(&a, &b)| (a - b) / h).collect();
                laplacian_terms.iter().fold(T::zero(), |acc, e| acc + e.eval(&smooth, &u))
            });
            let laplacian = s / h.powi(d as i32 + 2) / T::from_usize_(n);
            Ok(h_star_fixed_from_values(&req.kernel, lambda, laplacian, n)
                .h_star
                .unwrap_or(h))
        }
    }
}

/// Adaptive estimator for an arbitrary positive weight function `c`, whose
/// values must stay at or above `c_min > 0` so that only points within
/// `h / c_min` of `x₀` can contribute.
pub fn estimate_adaptive_weighted<T, C>(
    pattern: &PointPattern<T>,
    n: usize,
    req: &EstimateRequest<T>,
    c_min: T,
    weight: C,
) -> Result<T, EstimateError>
where
    T: Scalar,
    C: Fn(&[T]) -> T,
{
    if n == 0 {
        return Err(EstimateError::NoReplicates);
    }
    req.validate(pattern)?;
    let d = req.kernel.dim();
    let (h, x0) = (req.h, &req.x0);
    let eval = req.kernel.evaluator();
    let radius = inflate(h / c_min);
    let search = Search::new(pattern, req.search, radius);
    let s = search.sum(x0, radius, |y| adaptive_term(&eval, x0, y, h, weight(y), d as i32));
    Ok(normalise(s, h, d, n))
}

/// `(1/n) Σ_{y ∈ Y_n} c(y)^d/h^d κ((x₀ - y) c(y)/h)` on a pooled pattern.
pub fn estimate_adaptive_pooled<T: Scalar>(
    pattern: &PointPattern<T>,
    n: usize,
    req: &EstimateRequest<T>,
) -> Result<T, EstimateError> {
    let source = match &req.mode {
        EstimatorMode::Adaptive(s) => s,
        EstimatorMode::Fixed => return Err(EstimateError::WrongMode("adaptive estimator needs an adaptive request")),
    };
    if n == 0 {
        return Err(EstimateError::NoReplicates);
    }
    req.validate(pattern)?;
    let d = req.kernel.dim();
    let h = req.h;
    let x0 = &req.x0;
    let eval = req.kernel.evaluator();
    match source {
        WeightSource::Oracle(model) => {
            if model.dim() != d {
                return Err(EstimateError::DimensionMismatch {
                    kernel: d,
                    pattern: model.dim(),
                });
            }
            let weight = AbramsonWeight::new(model.clone(), x0.clone())?;
            estimate_adaptive_weighted(pattern, n, req, weight.min_on_window(), |y| weight.value(y))
        }
        WeightSource::Pilot { floor, .. } => {
            if !(*floor > T::zero() && *floor <= T::one()) {
                return Err(EstimateError::InvalidFloor(floor.to_f64_()));
            }
            let hp = resolve_pilot_bandwidth(pattern, n, req)?;
            let pilot_search = Search::new(pattern, req.search, hp);
            let pilot = |x: &[T]| fixed_with_search(&pilot_search, &req.kernel, x, hp, n);
            let p0 = pilot(x0);
            if !(p0 > T::zero()) {
                return Err(EstimateError::PilotZeroAtAnchor);
            }
            let lower = *floor * p0;
            // The floor gives c ≥ √ε; skip the pilot evaluation where the
            // kernel term is zero anyway.
            let eval = &eval;
            estimate_adaptive_weighted(pattern, n, req, floor.sqrt(), |y| {
                let r2 = x0.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
                if eval.at_sq_norm(r2 * *floor / (h * h)) == T::zero() {
                    return T::one();
                }
                (pilot(y).max(lower) / p0).sqrt()
            })
        }
    }
}

pub fn estimate_adaptive<T: Scalar>(sample: &SuperposedSample<T>, req: &EstimateRequest<T>) -> Result<T, EstimateError> {
    estimate_adaptive_pooled(&sample.union(), sample.n(), req)
}

/// Dispatches on the request mode.
pub fn estimate<T: Scalar>(sample: &SuperposedSample<T>, req: &EstimateRequest<T>) -> Result<T, EstimateError> {
    match req.mode {
        EstimatorMode::Fixed => estimate_fixed(sample, req),
        EstimatorMode::Adaptive(_) => estimate_adaptive(sample, req),
    }
}

pub fn estimate_pooled<T: Scalar>(pattern: &PointPattern<T>, n: usize, req: &EstimateRequest<T>) -> Result<T, EstimateError> {
    match req.mode {
        EstimatorMode::Fixed => estimate_fixed_pooled(pattern, n, req),
        EstimatorMode::Adaptive(_) => estimate_adaptive_pooled(pattern, n, req),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Window;

    fn line() -> Window<f64> {
        Window::new(vec![-1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn spec_examples() {
        let k = KernelSpec::new(1, 0.0).unwrap();
        let empty = SuperposedSample::new(vec![PointPattern::empty(line())]).unwrap();
        let req = EstimateRequest::fixed(vec![0.0], 0.1, k);
        assert_eq!(estimate_fixed(&empty, &req).unwrap(), 0.0);
        let one = SuperposedSample::new(vec![PointPattern::new(line(), vec![0.0]).unwrap()]).unwrap();
        assert!((estimate_fixed(&one, &req).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_single_point_with_weight_two() {
        let k = KernelSpec::new(1, 0.0).unwrap();
        let y = PointPattern::new(line(), vec![0.0]).unwrap();
        let req = EstimateRequest::pilot(vec![0.0], 0.1, k, PilotBandwidth::Fixed(0.1));
        let v = estimate_adaptive_weighted(&y, 1, &req, 2.0, |_| 2.0).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mode_and_input_checks() {
        let k = KernelSpec::new(1, 1.0).unwrap();
        let p = PointPattern::new(line(), vec![0.1]).unwrap();
        let req = EstimateRequest::fixed(vec![0.0], -0.1, k);
        assert_eq!(estimate_fixed_pooled(&p, 1, &req), Err(EstimateError::InvalidBandwidth(-0.1)));
        let req = EstimateRequest::fixed(vec![2.0], 0.1, k);
        assert!(matches!(estimate_fixed_pooled(&p, 1, &req), Err(EstimateError::Model(_))));
        let req = EstimateRequest::fixed(vec![0.0], 0.1, k);
        assert!(matches!(estimate_adaptive_pooled(&p, 1, &req), Err(EstimateError::WrongMode(_))));
        let far = PointPattern::new(line(), vec![0.9]).unwrap();
        let req = EstimateRequest::pilot(vec![0.0], 0.1, k, PilotBandwidth::Fixed(0.2));
        assert_eq!(estimate_adaptive_pooled(&far, 1, &req), Err(EstimateError::PilotZeroAtAnchor));
    }

    #[test]
    fn grid_index_matches_scan() {
        let w = Window::unit(2);
        let coords: Vec<f64> = (1..=4000).map(|i| ((i as f64) * 0.6180339887).fract()).collect();
        let p = PointPattern::new(w, coords).unwrap();
        let k = KernelSpec::new(2, 1.5).unwrap();
        for x0 in [[0.5, 0.5], [0.05, 0.93], [0.31, 0.77]] {
            let brute = EstimateRequest::fixed(x0.to_vec(), 0.07, k).with_search(SearchStrategy::BruteForce);
            let grid = brute.clone().with_search(SearchStrategy::Grid);
            assert_eq!(
                estimate_fixed_pooled(&p, 3, &brute).unwrap().to_bits(),
                estimate_fixed_pooled(&p, 3, &grid).unwrap().to_bits()
            );
        }
    }
}
