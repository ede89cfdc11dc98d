//! Layered (Goupillaud) media and their characteristics.
//!
//! At level `N` the medium consists of layers `[x_(k-1), x_k)` which a signal
//! crosses in exactly `2^(-N)` time units, so that characteristics are the
//! time shifts of the polygon through the path. The limit characteristics
//! use the right-continuous step path and its hitting times instead.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::export::{fmt17, ExportError};
use crate::levy_paths::{LevyPathSample, OutOfRange, PathError, Quantity};

/// Arguments of `γ(x, t; τ)`: the characteristic through `(x, t)` evaluated
/// at time `τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharQuery {
    pub x: f64,
    pub t: f64,
    pub tau: f64,
}

impl CharQuery {
    pub fn new(x: f64, t: f64, tau: f64) -> Self {
        Self { x, t, tau }
    }

    fn check_finite(&self) -> Result<(), PathError> {
        if self.x.is_finite() && self.t.is_finite() && self.tau.is_finite() {
            Ok(())
        } else {
            Err(PathError::InvalidSpec(format!(
                "non-finite characteristic query {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoupillaudMedium {
    path: LevyPathSample,
    speeds: Vec<f64>,
}

impl GoupillaudMedium {
    /// Medium at `level`, built from the path aggregated to that level.
    pub fn build(path: &LevyPathSample, level: u32) -> Result<Self, PathError> {
        let path = path.aggregate_to_level(level)?;
        let scale = path.grid().scale();
        let speeds = path.increments().iter().map(|d| d * scale).collect();
        Ok(Self { path, speeds })
    }

    pub fn level(&self) -> u32 {
        self.path.level()
    }

    /// The level-`N` path; its values are the layer boundaries.
    pub fn path(&self) -> &LevyPathSample {
        &self.path
    }

    pub fn boundaries(&self) -> &[f64] {
        self.path.values()
    }

    /// `speeds[i]` belongs to layer `k = k_min + 1 + i`.
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// Speed of the layer `[x_(k-1), x_k)` containing `x`.
    pub fn speed_at(&self, x: f64) -> Result<f64, OutOfRange> {
        let b = self.boundaries();
        let (lo, hi) = (b[0], b[b.len() - 1]);
        if !(x >= lo && x < hi) {
            return Err(OutOfRange {
                quantity: Quantity::Space,
                value: x,
                lo,
                hi,
            });
        }
        let i = b.partition_point(|&v| v <= x);
        Ok(self.speeds[i - 1])
    }

    /// `γ^(N)(x, t; τ)`: the polygon shifted in time so that it passes
    /// through `(x, t)`.
    pub fn characteristic(&self, q: CharQuery) -> Result<f64, PathError> {
        q.check_finite()?;
        let s = self.path.polygon_inverse(q.x)? + (q.tau - q.t);
        Ok(self.path.polygon_eval(s)?)
    }

    /// CSV with header `k,x_left,x_right,c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "x_left", "x_right", "c"])?;
        let k_min = self.path.grid().k_min;
        for (i, &c) in self.speeds.iter().enumerate() {
            let k = k_min + 1 + i as i64;
            w.write_record([
                k.to_string(),
                fmt17(self.path.x(k - 1)),
                fmt17(self.path.x(k)),
                fmt17(c),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_medium(path: &LevyPathSample, level: u32) -> Result<GoupillaudMedium, PathError> {
    GoupillaudMedium::build(path, level)
}

/// `γ^(N)(x, t; τ)` for a path aggregated to `level`.
pub fn characteristic_n(path: &LevyPathSample, level: u32, q: CharQuery) -> Result<f64, PathError> {
    GoupillaudMedium::build(path, level)?.characteristic(q)
}

/// Limit characteristic `γ(x, t; τ) = L(τ + L*(x) - t)` in step semantics at
/// the path's own level.
pub fn characteristic_limit(path: &LevyPathSample, q: CharQuery) -> Result<f64, PathError> {
    q.check_finite()?;
    let s = path.hitting_time(q.x)? + (q.tau - q.t);
    Ok(path.step_eval(s)?)
}

/// Base point `γ(x, t; 0)` of the limit characteristic through `(x, t)`.
pub fn basepoint(path: &LevyPathSample, x: f64, t: f64) -> Result<f64, PathError> {
    characteristic_limit(path, CharQuery::new(x, t, 0.0))
}

/// CSV with header `tau,gamma`.
pub fn write_trace_csv<W: Write>(rows: &[(f64, f64)], out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "gamma"])?;
    for &(tau, g) in rows {
        w.write_record([fmt17(tau), fmt17(g)])?;
    }
    w.flush()?;
    Ok(())
}
