//! Reproducible point-pattern generation: thinned inhomogeneous Poisson,
//! infill superpositions and planar Thomas cluster processes.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{IntensityModel, ModelError, Window};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("number of replicates must be at least 1")]
    NoReplicates,
    #[error("Thomas process is only implemented for d = 2, got d = {0}")]
    ThomasDimension(usize),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A `(seed, index)` pair naming an independent ChaCha8 stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    /// Stream `i` of `count` children; distinct `(index, i)` never collide.
    pub fn child(&self, count: u64, i: u64) -> Self {
        debug_assert!(i < count);
        Self {
            seed: self.seed,
            index: self.index.wrapping_mul(count).wrapping_add(i),
        }
    }

    /// Children of a parent stream are drawn from the same seed on a
    /// disjoint stream range, so nesting does not need a new seed.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Points of one realisation, stored as a flat `n × d` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern<T> {
    window: Window<T>,
    coords: Vec<T>,
}

impl<T: Scalar> PointPattern<T> {
    pub fn new(window: Window<T>, coords: Vec<T>) -> Result<Self, ModelError> {
        let d = window.dim();
        assert_eq!(coords.len() % d, 0, "flat coordinate buffer must be a multiple of d");
        for p in coords.chunks_exact(d) {
            window.check_point(p, "point")?;
        }
        Ok(Self { window, coords })
    }

    pub fn empty(window: Window<T>) -> Self {
        Self {
            window,
            coords: Vec::new(),
        }
    }

    pub fn window(&self) -> &Window<T> {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, T> {
        self.coords.chunks_exact(self.dim())
    }

    pub fn point(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }
}

/// The infill sample `Y_n`, kept as its `n` replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperposedSample<T> {
    replicates: Vec<PointPattern<T>>,
}

impl<T: Scalar> SuperposedSample<T> {
    pub fn new(replicates: Vec<PointPattern<T>>) -> Result<Self, SimulateError> {
        if replicates.is_empty() {
            return Err(SimulateError::NoReplicates);
        }
        Ok(Self { replicates })
    }

    pub fn n(&self) -> usize {
        self.replicates.len()
    }

    pub fn replicates(&self) -> &[PointPattern<T>] {
        &self.replicates
    }

    pub fn total_count(&self) -> usize {
        self.replicates.iter().map(PointPattern::len).sum()
    }

    /// `Y_n` as a single pattern, replicates concatenated in order.
    pub fn union(&self) -> PointPattern<T> {
        let window = self.replicates[0].window.clone();
        let coords = self.replicates.iter().flat_map(|r| r.coords.iter().copied()).collect();
        PointPattern { window, coords }
    }
}

fn poisson_count<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive Poisson mean").sample(rng) as u64
}

fn uniform_in_box<T: Scalar, R: Rng>(lower: &[T], upper: &[T], rng: &mut R, out: &mut [T]) {
    for ((o, &l), &u) in out.iter_mut().zip(lower).zip(upper) {
        *o = l + (u - l) * T::c(rng.random::<f64>());
    }
}

/// Lewis–Shedler thinning of a homogeneous Poisson(`lambda_bar`) process on
/// the box `[lower, upper]`, keeping points that also lie in `window`.
/// `intensity` must not exceed `lambda_bar` there.
pub fn thin_in_box<T, F>(
    intensity: F,
    lambda_bar: T,
    lower: &[T],
    upper: &[T],
    window: &Window<T>,
    rng: &mut ChaCha8Rng,
) -> Vec<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let d = lower.len();
    let volume = lower.iter().zip(upper).fold(1.0, |acc, (&l, &u)| acc * (u - l).to_f64_());
    let count = poisson_count(lambda_bar.to_f64_() * volume, rng);
    let mut coords = Vec::new();
    let mut x = vec![T::zero(); d];
    for _ in 0..count {
        uniform_in_box(lower, upper, rng, &mut x);
        let accept = T::c(rng.random::<f64>()) * lambda_bar < intensity(&x);
        if accept && window.contains(&x) {
            coords.extend_from_slice(&x);
        }
    }
    coords
}

/// Inhomogeneous Poisson process with intensity `intensity ≤ lambda_bar` on `window`.
pub fn sample_poisson_with<T, F>(intensity: F, lambda_bar: T, window: &Window<T>, rng: RngStream) -> PointPattern<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let mut gen = rng.generator();
    let coords = thin_in_box(intensity, lambda_bar, window.lower(), window.upper(), window, &mut gen);
    PointPattern {
        window: window.clone(),
        coords,
    }
}

pub fn sample_poisson<T: Scalar>(model: &IntensityModel<T>, rng: RngStream) -> PointPattern<T> {
    sample_poisson_with(|x| model.value(x), model.lambda_max(), model.window(), rng)
}

/// `n` independent Poisson replicates on streams `rng.child(n, i)`.
pub fn sample_superposition<T: Scalar>(
    model: &IntensityModel<T>,
    n: usize,
    rng: RngStream,
) -> Result<SuperposedSample<T>, SimulateError> {
    if n == 0 {
        return Err(SimulateError::NoReplicates);
    }
    let replicates = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_poisson(model, rng.child(n as u64, i)))
        .collect();
    SuperposedSample::new(replicates)
}

/// The union `Y_n` of `n` Poisson replicates restricted to the cube of
/// half-width `radius` around `center`, drawn directly as a Poisson process
/// with intensity `nλ`. Equal in law to restricting `sample_superposition`,
/// at a cost independent of the window size.
pub fn sample_union_poisson_local<T: Scalar>(
    model: &IntensityModel<T>,
    n: usize,
    center: &[T],
    radius: T,
    rng: RngStream,
) -> Result<PointPattern<T>, SimulateError> {
    if n == 0 {
        return Err(SimulateError::NoReplicates);
    }
    let window = model.window();
    window.check_point(center, "centre")?;
    let lower: Vec<T> = center
        .iter()
        .zip(window.lower())
        .map(|(&c, &l)| (c - radius).max(l))
        .collect();
    let upper: Vec<T> = center
        .iter()
        .zip(window.upper())
        .map(|(&c, &u)| (c + radius).min(u))
        .collect();
    let nf = T::from_usize_(n);
    let mut gen = rng.generator();
    let coords = thin_in_box(|x| nf * model.value(x), nf * model.lambda_max(), &lower, &upper, window, &mut gen);
    Ok(PointPattern {
        window: window.clone(),
        coords,
    })
}

/// Planar Thomas process. Parents are Poisson(`parent_intensity`) on the
/// window dilated by `4σ`; each has Poisson(`offspring_mean`) offspring
/// displaced by `N(0, σ²I)`, and offspring outside the window are dropped.
pub fn sample_thomas<T: Scalar>(
    parent_intensity: T,
    offspring_mean: T,
    sigma: T,
    window: &Window<T>,
    rng: RngStream,
) -> Result<PointPattern<T>, SimulateError> {
    let d = window.dim();
    if d != 2 {
        return Err(SimulateError::ThomasDimension(d));
    }
    crate::model::PairCorrelationModel::thomas(parent_intensity, offspring_mean, sigma)?;
    let margin = T::c(4.0) * sigma;
    let lower: Vec<T> = window.lower().iter().map(|&l| l - margin).collect();
    let upper: Vec<T> = window.upper().iter().map(|&u| u + margin).collect();
    let volume = lower.iter().zip(&upper).fold(1.0, |acc, (&l, &u)| acc * (u - l).to_f64_());
    let mut gen = rng.generator();
    let parents = poisson_count(parent_intensity.to_f64_() * volume, &mut gen);
    let mut coords = Vec::new();
    let mut parent = vec![T::zero(); d];
    let mut child = vec![T::zero(); d];
    for _ in 0..parents {
        uniform_in_box(&lower, &upper, &mut gen, &mut parent);
        let k = poisson_count(offspring_mean.to_f64_(), &mut gen);
        for _ in 0..k {
            for (c, &p) in child.iter_mut().zip(&parent) {
                let z: f64 = StandardNormal.sample(&mut gen);
                *c = p + sigma * T::c(z);
            }
            if window.contains(&child) {
                coords.extend_from_slice(&child);
            }
        }
    }
    Ok(PointPattern {
        window: window.clone(),
        coords,
    })
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// Header `x1,…,xd`, one point per row.
pub fn write_pattern_csv<T: Scalar, W: Write>(pattern: &PointPattern<T>, out: W) -> Result<(), SimulateError> {
    let mut w = csv_writer(out);
    w.write_record(header(pattern.dim()))?;
    for p in pattern.points() {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Header `x1,…,xd,replicate`; replicate ids count from 0.
pub fn write_superposed_csv<T: Scalar, W: Write>(sample: &SuperposedSample<T>, out: W) -> Result<(), SimulateError> {
    let mut w = csv_writer(out);
    let mut h = header(sample.replicates[0].dim());
    h.push("replicate".into());
    w.write_record(&h)?;
    for (r, pattern) in sample.replicates.iter().enumerate() {
        for p in pattern.points() {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(r.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
