//! Two-sided, strictly increasing Lévy paths sampled on dyadic grids.
//!
//! A path is sampled once at its finest level; coarser levels come from
//! [`LevyPathSample::aggregate_to_level`], which sums fine increments, so
//! that the dyadic consistency relation between levels holds by construction.
//! Evaluation comes in two flavours: the piecewise affine polygon through the
//! grid points (used at finite levels) and the right-continuous step function
//! (the finest-level stand-in for the càdlàg limit path), together with
//! their inverses.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::{fmt17, ExportError};
use crate::rng::RngSeed;

/// Strictly increasing Lévy process families.
///
/// * `GammaDrift`: `L(t) ~ Gamma(shape_rate * t, scale) + drift * t`.
/// * `PoissonDrift`: `L(t) ~ jump_size * Poisson(intensity * t) + drift * t`.
/// * `StableHalf`: first-passage times of standard Brownian motion,
///   `L(t) ~ t^2 / Z^2` (the driftless inverse Gaussian subordinator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "kebab-case")]
pub enum ProcessSpec {
    GammaDrift { shape_rate: f64, scale: f64, drift: f64 },
    PoissonDrift { intensity: f64, jump_size: f64, drift: f64 },
    StableHalf,
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<(), PathError> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PathError::InvalidSpec(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        match *self {
            Self::GammaDrift {
                shape_rate,
                scale,
                drift,
            } => {
                positive(shape_rate, "shape_rate")?;
                positive(scale, "scale")?;
                if !(drift >= 0.0 && drift.is_finite()) {
                    return Err(PathError::InvalidSpec(format!(
                        "drift must be nonnegative, got {drift}"
                    )));
                }
            }
            Self::PoissonDrift {
                intensity,
                jump_size,
                drift,
            } => {
                positive(intensity, "intensity")?;
                positive(jump_size, "jump_size")?;
                // between jumps the path only moves through its drift
                positive(drift, "drift")?;
            }
            Self::StableHalf => {}
        }
        Ok(())
    }

    /// `E[L(1)]`, infinite for the stable-1/2 case.
    pub fn mean_at_one(&self) -> f64 {
        match *self {
            Self::GammaDrift {
                shape_rate,
                scale,
                drift,
            } => shape_rate * scale + drift,
            Self::PoissonDrift {
                intensity,
                jump_size,
                drift,
            } => intensity * jump_size + drift,
            Self::StableHalf => f64::INFINITY,
        }
    }

    /// `Var[L(1)]`, infinite for the stable-1/2 case.
    pub fn variance_at_one(&self) -> f64 {
        match *self {
            Self::GammaDrift { shape_rate, scale, .. } => shape_rate * scale * scale,
            Self::PoissonDrift {
                intensity, jump_size, ..
            } => intensity * jump_size * jump_size,
            Self::StableHalf => f64::INFINITY,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GammaDrift { .. } => "gamma",
            Self::PoissonDrift { .. } => "poisson",
            Self::StableHalf => "stable-half",
        }
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::GammaDrift {
                shape_rate,
                scale,
                drift,
            } => {
                write!(f, "gamma(shape_rate={shape_rate}, scale={scale}, drift={drift})")
            }
            Self::PoissonDrift {
                intensity,
                jump_size,
                drift,
            } => {
                write!(f, "poisson(intensity={intensity}, jump={jump_size}, drift={drift})")
            }
            Self::StableHalf => write!(f, "stable-half"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("invalid process spec: {0}")]
    InvalidSpec(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid index window [{k_min}, {k_max}]: need k_min <= 0 <= k_max")]
    InvalidWindow { k_min: i64, k_max: i64 },
    #[error("increment {index} is not positive ({value})")]
    NonPositiveIncrement { index: i64, value: f64 },
    #[error(
        "path is not strictly increasing at k = {index} (x = {value}); increments fell below floating-point resolution"
    )]
    NotStrictlyIncreasing { index: i64, value: f64 },
    #[error("level {requested} is finer than the sampled level {available}")]
    LevelTooFine { requested: u32, available: u32 },
    #[error("{0}")]
    OutOfRange(#[from] OutOfRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Time,
    Space,
}

/// A query left the sampled window; names the violated bound.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub struct OutOfRange {
    pub quantity: Quantity,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl OutOfRange {
    pub fn below_lower_bound(&self) -> bool {
        !(self.value >= self.lo)
    }
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.quantity {
            Quantity::Time => "time",
            Quantity::Space => "space",
        };
        if self.below_lower_bound() {
            write!(
                f,
                "{what} {} is below the lower bound {} of the sampled window",
                self.value, self.lo
            )
        } else {
            write!(
                f,
                "{what} {} is above the upper bound {} of the sampled window",
                self.value, self.hi
            )
        }
    }
}

/// Draws of `L(dt)` for one fixed step size.
#[derive(Debug, Clone, Copy)]
pub enum IncrementSampler {
    Gamma {
        gamma: Gamma<f64>,
        drift_part: f64,
    },
    Poisson {
        poisson: Poisson<f64>,
        jump_size: f64,
        drift_part: f64,
    },
    StableHalf {
        dt_sq: f64,
    },
}

impl IncrementSampler {
    pub fn new(spec: &ProcessSpec, dt: f64) -> Result<Self, PathError> {
        spec.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PathError::NonPositiveStep(dt));
        }
        Ok(match *spec {
            ProcessSpec::GammaDrift {
                shape_rate,
                scale,
                drift,
            } => Self::Gamma {
                gamma: Gamma::new(shape_rate * dt, scale)
                    .map_err(|e| PathError::InvalidSpec(format!("gamma increment law: {e}")))?,
                drift_part: drift * dt,
            },
            ProcessSpec::PoissonDrift {
                intensity,
                jump_size,
                drift,
            } => Self::Poisson {
                poisson: Poisson::new(intensity * dt)
                    .map_err(|e| PathError::InvalidSpec(format!("poisson increment law: {e}")))?,
                jump_size,
                drift_part: drift * dt,
            },
            ProcessSpec::StableHalf => Self::StableHalf { dt_sq: dt * dt },
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gamma { gamma, drift_part } => gamma.sample(rng) + drift_part,
            Self::Poisson {
                poisson,
                jump_size,
                drift_part,
            } => jump_size * poisson.sample(rng) + drift_part,
            Self::StableHalf { dt_sq } => loop {
                // first passage of level dt: dt^2 / Z^2
                let z: f64 = StandardNormal.sample(rng);
                if z != 0.0 {
                    break dt_sq / (z * z);
                }
            },
        }
    }
}

/// One draw of `L(dt)`.
pub fn sample_increment<R: Rng + ?Sized>(spec: &ProcessSpec, dt: f64, rng: &mut R) -> Result<f64, PathError> {
    Ok(IncrementSampler::new(spec, dt)?.sample(rng))
}

/// Grid `t_k = k 2^(-level)` for `k_min <= k <= k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicGrid {
    pub level: u32,
    pub k_min: i64,
    pub k_max: i64,
}

impl DyadicGrid {
    pub fn new(level: u32, k_min: i64, k_max: i64) -> Result<Self, PathError> {
        if k_min > 0 || k_max < 0 {
            return Err(PathError::InvalidWindow { k_min, k_max });
        }
        Ok(Self { level, k_min, k_max })
    }

    /// `2^level`, exact.
    pub fn scale(&self) -> f64 {
        2f64.powi(self.level as i32)
    }

    pub fn dt(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    pub fn t(&self, k: i64) -> f64 {
        k as f64 * self.dt()
    }

    pub fn t_min(&self) -> f64 {
        self.t(self.k_min)
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.k_max)
    }

    pub fn len(&self) -> usize {
        (self.k_max - self.k_min) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the grid cell `[t_k, t_(k+1))` containing `tau`.
    fn floor_index(&self, tau: f64) -> i64 {
        (tau * self.scale()).floor() as i64
    }
}

/// A sampled path `x_k = L(t_k)` on a dyadic grid, with `x_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyPathSample {
    grid: DyadicGrid,
    values: Vec<f64>,
    /// `increments[i]` is `Δx_k` for `k = k_min + 1 + i`.
    increments: Vec<f64>,
    seed: Option<RngSeed>,
    spec: Option<ProcessSpec>,
}

impl LevyPathSample {
    /// Builds a path from its increments `Δx_k`, `k = k_min+1 ..= k_max`.
    /// Positive indices are summed forward from `x_0 = 0`, the others are
    /// subtracted backwards.
    pub fn from_increments(level: u32, k_min: i64, increments: Vec<f64>) -> Result<Self, PathError> {
        let k_max = k_min + increments.len() as i64;
        let grid = DyadicGrid::new(level, k_min, k_max)?;
        for (i, &d) in increments.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(PathError::NonPositiveIncrement {
                    index: k_min + 1 + i as i64,
                    value: d,
                });
            }
        }
        let values = accumulate(&grid, &increments);
        let path = Self {
            grid,
            values,
            increments,
            seed: None,
            spec: None,
        };
        path.check_strictly_increasing()?;
        Ok(path)
    }

    /// Pure-drift path `x_k = drift * t_k`.
    pub fn pure_drift(drift: f64, level: u32, k_min: i64, k_max: i64) -> Result<Self, PathError> {
        let grid = DyadicGrid::new(level, k_min, k_max)?;
        let d = drift * grid.dt();
        Self::from_increments(level, k_min, vec![d; (k_max - k_min) as usize])
    }

    fn check_strictly_increasing(&self) -> Result<(), PathError> {
        for (i, w) in self.values.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                return Err(PathError::NotStrictlyIncreasing {
                    index: self.grid.k_min + 1 + i as i64,
                    value: w[1],
                });
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn level(&self) -> u32 {
        self.grid.level
    }

    pub fn seed(&self) -> Option<RngSeed> {
        self.seed
    }

    pub fn spec(&self) -> Option<ProcessSpec> {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `x_k`; panics outside the window.
    pub fn x(&self, k: i64) -> f64 {
        self.values[(k - self.grid.k_min) as usize]
    }

    /// `Δx_k = x_k - x_(k-1)` as sampled (or aggregated); `k_min < k <= k_max`.
    pub fn increment(&self, k: i64) -> f64 {
        self.increments[(k - self.grid.k_min - 1) as usize]
    }

    pub fn x_min(&self) -> f64 {
        self.values[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }

    fn check_time(&self, tau: f64) -> Result<(), OutOfRange> {
        let (lo, hi) = (self.grid.t_min(), self.grid.t_max());
        if tau >= lo && tau <= hi {
            Ok(())
        } else {
            Err(OutOfRange {
                quantity: Quantity::Time,
                value: tau,
                lo,
                hi,
            })
        }
    }

    fn check_space(&self, x: f64) -> Result<(), OutOfRange> {
        let (lo, hi) = (self.x_min(), self.x_max());
        if x >= lo && x <= hi {
            Ok(())
        } else {
            Err(OutOfRange {
                quantity: Quantity::Space,
                value: x,
                lo,
                hi,
            })
        }
    }

    /// Coarsens to `level` by subsampling values at `k 2^M` and summing blocks
    /// of `2^M` fine increments. The index window is trimmed inward to the
    /// coarse indices whose fine counterparts are sampled.
    pub fn aggregate_to_level(&self, level: u32) -> Result<Self, PathError> {
        if level > self.grid.level {
            return Err(PathError::LevelTooFine {
                requested: level,
                available: self.grid.level,
            });
        }
        if level == self.grid.level {
            return Ok(self.clone());
        }
        let block = 1i64 << (self.grid.level - level);
        let c_min = self.grid.k_min.div_euclid(block) + i64::from(self.grid.k_min.rem_euclid(block) != 0);
        let c_max = self.grid.k_max.div_euclid(block);
        let grid = DyadicGrid::new(level, c_min, c_max)?;
        let values = (c_min..=c_max).map(|c| self.x(c * block)).collect();
        let increments = ((c_min + 1)..=c_max)
            .map(|c| {
                let first = (c - 1) * block + 1;
                (first..first + block).map(|k| self.increment(k)).sum()
            })
            .collect();
        Ok(Self {
            grid,
            values,
            increments,
            seed: self.seed,
            spec: self.spec,
        })
    }

    /// Piecewise affine interpolation through `(t_k, x_k)`.
    pub fn polygon_eval(&self, tau: f64) -> Result<f64, OutOfRange> {
        self.check_time(tau)?;
        let j = self.grid.floor_index(tau);
        if j >= self.grid.k_max {
            return Ok(self.x_max());
        }
        let alpha = (self.grid.t(j + 1) - tau) * self.grid.scale();
        Ok(alpha * self.x(j) + (1.0 - alpha) * self.x(j + 1))
    }

    /// Inverse of [`Self::polygon_eval`].
    pub fn polygon_inverse(&self, x: f64) -> Result<f64, OutOfRange> {
        self.check_space(x)?;
        // last node with x_j <= x
        let i = self.values.partition_point(|&v| v <= x) - 1;
        let j = self.grid.k_min + i as i64;
        if j >= self.grid.k_max {
            return Ok(self.grid.t_max());
        }
        let (lo, hi) = (self.values[i], self.values[i + 1]);
        let frac = (x - lo) / (hi - lo);
        Ok(self.grid.t(j) + frac * self.grid.dt())
    }

    /// Right-continuous step function: `x_k` on `[t_k, t_(k+1))`.
    pub fn step_eval(&self, tau: f64) -> Result<f64, OutOfRange> {
        self.check_time(tau)?;
        let j = self.grid.floor_index(tau).min(self.grid.k_max);
        Ok(self.x(j))
    }

    /// `inf { t_k : x_k >= x }`, the grid realization of the hitting time.
    pub fn hitting_time(&self, x: f64) -> Result<f64, OutOfRange> {
        Ok(self.grid.t(self.hitting_index(x)?))
    }

    /// Index of [`Self::hitting_time`].
    pub fn hitting_index(&self, x: f64) -> Result<i64, OutOfRange> {
        self.check_space(x)?;
        let i = self.values.partition_point(|&v| v < x);
        Ok(self.grid.k_min + i as i64)
    }

    /// CSV with header `k,t,x`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "t", "x"])?;
        for (i, &x) in self.values.iter().enumerate() {
            let k = self.grid.k_min + i as i64;
            w.write_record([k.to_string(), fmt17(self.grid.t(k)), fmt17(x)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> PathMetadata {
        PathMetadata {
            spec: self.spec,
            level: self.grid.level,
            k_min: self.grid.k_min,
            k_max: self.grid.k_max,
            t_min: self.grid.t_min(),
            t_max: self.grid.t_max(),
            seed: self.seed,
        }
    }
}

/// JSON sidecar for an exported path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMetadata {
    pub spec: Option<ProcessSpec>,
    pub level: u32,
    pub k_min: i64,
    pub k_max: i64,
    pub t_min: f64,
    pub t_max: f64,
    pub seed: Option<RngSeed>,
}

fn accumulate(grid: &DyadicGrid, increments: &[f64]) -> Vec<f64> {
    let mut values = vec![0.0; grid.len()];
    let origin = (-grid.k_min) as usize;
    for k in 1..=grid.k_max as usize {
        values[origin + k] = values[origin + k - 1] + increments[origin + k - 1];
    }
    for i in (1..=origin).rev() {
        // x_(k-1) = x_k - Δx_k with k = i + k_min
        values[i - 1] = values[i] - increments[i - 1];
    }
    values
}

/// Increment generator for one realization: increment `k` (covering
/// `[t_(k-1), t_k]`) is drawn from the substream keyed by `k`.
#[derive(Debug, Clone, Copy)]
pub struct PathGenerator {
    pub spec: ProcessSpec,
    pub level: u32,
    pub seed: RngSeed,
    sampler: IncrementSampler,
}

impl PathGenerator {
    pub fn new(spec: ProcessSpec, level: u32, seed: RngSeed) -> Result<Self, PathError> {
        let dt = 2f64.powi(-(level as i32));
        Ok(Self {
            spec,
            level,
            seed,
            sampler: IncrementSampler::new(&spec, dt)?,
        })
    }

    pub fn increment(&self, k: i64) -> f64 {
        self.sampler.sample(&mut self.seed.substream(k))
    }

    /// Full path on `[k_min, k_max]`; increments are drawn in parallel.
    pub fn build(&self, k_min: i64, k_max: i64) -> Result<LevyPathSample, PathError> {
        let grid = DyadicGrid::new(self.level, k_min, k_max)?;
        let increments: Vec<f64> = ((k_min + 1)..=k_max)
            .into_par_iter()
            .map(|k| self.increment(k))
            .collect();
        self.assemble(grid, increments)
    }

    /// Path restricted to the smallest window `[lo, hi]`, `lo <= 0 <= hi`,
    /// containing the hitting index of `x`, searching no further than
    /// `[k_min, k_max]`. Values agree bitwise with `build(k_min, k_max)`.
    pub fn build_until_hit(&self, x: f64, k_min: i64, k_max: i64) -> Result<LevyPathSample, PathError> {
        DyadicGrid::new(self.level, k_min, k_max)?;
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        if x > 0.0 {
            let mut acc = 0.0;
            let mut k = 0;
            while acc < x {
                if k == k_max {
                    return Err(OutOfRange {
                        quantity: Quantity::Space,
                        value: x,
                        lo: 0.0,
                        hi: acc,
                    }
                    .into());
                }
                k += 1;
                let d = self.increment(k);
                acc += d;
                forward.push(d);
            }
        } else {
            // need x_(k-1) < x <= x_k on the negative side
            let mut acc = 0.0;
            let mut k = 0;
            while acc >= x {
                if k == k_min {
                    return Err(OutOfRange {
                        quantity: Quantity::Space,
                        value: x,
                        lo: acc,
                        hi: 0.0,
                    }
                    .into());
                }
                let d = self.increment(k);
                acc -= d;
                backward.push(d);
                k -= 1;
            }
        }
        let lo = -(backward.len() as i64);
        backward.reverse();
        backward.extend(forward);
        let grid = DyadicGrid::new(self.level, lo, lo + backward.len() as i64)?;
        self.assemble(grid, backward)
    }

    /// Extends a path produced by this generator downwards to `k_min`.
    pub fn extend_down(&self, path: &LevyPathSample, k_min: i64) -> Result<LevyPathSample, PathError> {
        let g = path.grid;
        if k_min >= g.k_min {
            return Ok(path.clone());
        }
        let mut increments: Vec<f64> = ((k_min + 1)..=g.k_min).map(|k| self.increment(k)).collect();
        increments.extend_from_slice(&path.increments);
        self.assemble(DyadicGrid::new(self.level, k_min, g.k_max)?, increments)
    }

    fn assemble(&self, grid: DyadicGrid, increments: Vec<f64>) -> Result<LevyPathSample, PathError> {
        let values = accumulate(&grid, &increments);
        let path = LevyPathSample {
            grid,
            values,
            increments,
            seed: Some(self.seed),
            spec: Some(self.spec),
        };
        path.check_strictly_increasing()?;
        Ok(path)
    }
}

/// Samples a two-sided path at level `n_max` on `[k_min, k_max]`.
pub fn build_two_sided_path(
    spec: &ProcessSpec,
    n_max: u32,
    k_min: i64,
    k_max: i64,
    seed: RngSeed,
) -> Result<LevyPathSample, PathError> {
    PathGenerator::new(*spec, n_max, seed)?.build(k_min, k_max)
}
