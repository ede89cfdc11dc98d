//! Solutions of the transport equation along characteristics and their
//! `L^p` convergence on compact windows.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::{fmt17, ExportError};
use crate::goupillaud::{characteristic_limit, CharQuery, GoupillaudMedium};
use crate::levy_paths::{LevyPathSample, PathError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDatum {
    Constant {
        value: f64,
    },
    /// `height * max(0, 1 - |x - center| / halfwidth)`.
    Triangular {
        center: f64,
        halfwidth: f64,
        height: f64,
    },
    /// Linear interpolation between nodes, zero outside. The end values must
    /// be zero so that the datum stays continuous.
    PiecewiseLinear {
        nodes: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("invalid initial datum: {0}")]
    InvalidDatum(String),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("exponent p must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("field grid mismatch: {0}")]
    GridMismatch(String),
}

impl InitialDatum {
    pub fn validate(&self) -> Result<(), TransportError> {
        match self {
            Self::Constant { value } if !value.is_finite() => {
                Err(TransportError::InvalidDatum(format!("constant {value} is not finite")))
            }
            Self::Triangular {
                center,
                halfwidth,
                height,
            } => {
                if !(*halfwidth > 0.0 && halfwidth.is_finite() && center.is_finite() && height.is_finite()) {
                    Err(TransportError::InvalidDatum(format!(
                        "triangle needs finite center/height and positive halfwidth, got {center}/{halfwidth}/{height}"
                    )))
                } else {
                    Ok(())
                }
            }
            Self::PiecewiseLinear { nodes } => {
                if nodes.len() < 2 {
                    return Err(TransportError::InvalidDatum("need at least two nodes".into()));
                }
                if nodes.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
                    return Err(TransportError::InvalidDatum("non-finite node".into()));
                }
                if nodes.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(TransportError::InvalidDatum(
                        "node abscissae must be strictly increasing".into(),
                    ));
                }
                if nodes[0].1 != 0.0 || nodes[nodes.len() - 1].1 != 0.0 {
                    return Err(TransportError::InvalidDatum(
                        "first and last node values must be 0 (datum is zero outside)".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Triangular {
                center,
                halfwidth,
                height,
            } => height * (1.0 - (x - center).abs() / halfwidth).max(0.0),
            Self::PiecewiseLinear { nodes } => {
                if x < nodes[0].0 || x > nodes[nodes.len() - 1].0 {
                    return 0.0;
                }
                let i = nodes.partition_point(|n| n.0 <= x);
                if i == nodes.len() {
                    return nodes[i - 1].1;
                }
                let ((x0, v0), (x1, v1)) = (nodes[i - 1], nodes[i]);
                v0 + (v1 - v0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// `(min u0, max u0)` over the real line.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Self::Constant { value } => (*value, *value),
            Self::Triangular { height, .. } => (height.min(0.0), height.max(0.0)),
            Self::PiecewiseLinear { nodes } => nodes
                .iter()
                .fold((0.0f64, 0.0f64), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v))),
        }
    }
}

pub fn eval_initial(datum: &InitialDatum, x: f64) -> f64 {
    datum.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldLevel {
    Discrete(u32),
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub time: f64,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub level: FieldLevel,
}

impl SolutionField {
    /// Long-format CSV `t,x,u` for several fields, header once.
    pub fn write_csv<W: Write>(fields: &[SolutionField], out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "u"])?;
        for f in fields {
            for (x, u) in f.xs.iter().zip(&f.values) {
                w.write_record([fmt17(f.time), fmt17(*x), fmt17(*u)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `u^(N)(t, x) = u0(γ^(N)(x, t; 0))` on a prebuilt medium.
pub fn solve_on_medium(
    medium: &GoupillaudMedium,
    datum: &InitialDatum,
    t: f64,
    xs: &[f64],
) -> Result<SolutionField, TransportError> {
    datum.validate()?;
    let values = xs
        .par_iter()
        .map(|&x| Ok(datum.eval(medium.characteristic(CharQuery::new(x, t, 0.0))?)))
        .collect::<Result<Vec<_>, PathError>>()?;
    Ok(SolutionField {
        time: t,
        xs: xs.to_vec(),
        values,
        level: FieldLevel::Discrete(medium.level()),
    })
}

pub fn solve_at_level(
    path: &LevyPathSample,
    level: u32,
    datum: &InitialDatum,
    t: f64,
    xs: &[f64],
) -> Result<SolutionField, TransportError> {
    solve_on_medium(&GoupillaudMedium::build(path, level)?, datum, t, xs)
}

/// `u(t, x) = u0(γ(x, t; 0))` with the limit characteristics.
pub fn solve_limit(
    path: &LevyPathSample,
    datum: &InitialDatum,
    t: f64,
    xs: &[f64],
) -> Result<SolutionField, TransportError> {
    datum.validate()?;
    let values = xs
        .par_iter()
        .map(|&x| Ok(datum.eval(characteristic_limit(path, CharQuery::new(x, t, 0.0))?)))
        .collect::<Result<Vec<_>, PathError>>()?;
    Ok(SolutionField {
        time: t,
        xs: xs.to_vec(),
        values,
        level: FieldLevel::Limit,
    })
}

/// Rectangle `[t_lo, t_hi] x [x_lo, x_hi]` with an `n_t x n_x` midpoint grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowK {
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub n_t: usize,
    pub n_x: usize,
}

impl WindowK {
    pub fn new(t_range: (f64, f64), x_range: (f64, f64)) -> Result<Self, TransportError> {
        Self::with_grid(t_range, x_range, 64, 512)
    }

    pub fn with_grid(t_range: (f64, f64), x_range: (f64, f64), n_t: usize, n_x: usize) -> Result<Self, TransportError> {
        let k = Self {
            t_range,
            x_range,
            n_t,
            n_x,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo < hi;
        if !ok(self.t_range) || !ok(self.x_range) {
            return Err(TransportError::InvalidWindow(format!(
                "need t_lo < t_hi and x_lo < x_hi, got t {:?}, x {:?}",
                self.t_range, self.x_range
            )));
        }
        if self.n_t == 0 || self.n_x == 0 {
            return Err(TransportError::InvalidWindow("grid sizes must be positive".into()));
        }
        Ok(())
    }

    fn midpoints((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        Self::midpoints(self.t_range, self.n_t)
    }

    pub fn xs(&self) -> Vec<f64> {
        Self::midpoints(self.x_range, self.n_x)
    }

    pub fn cell_area(&self) -> f64 {
        (self.t_range.1 - self.t_range.0) / self.n_t as f64 * (self.x_range.1 - self.x_range.0) / self.n_x as f64
    }
}

fn check_fields(fields: &[SolutionField], k: &WindowK, times: &[f64], which: &str) -> Result<(), TransportError> {
    if fields.len() != times.len() {
        return Err(TransportError::GridMismatch(format!(
            "{which}: {} fields for {} times",
            fields.len(),
            times.len()
        )));
    }
    for (f, &t) in fields.iter().zip(times) {
        if f.time != t {
            return Err(TransportError::GridMismatch(format!(
                "{which}: field at t={} where t={t} expected",
                f.time
            )));
        }
        if f.xs.len() != k.n_x || f.values.len() != k.n_x {
            return Err(TransportError::GridMismatch(format!(
                "{which}: field at t={t} has {} points, window has {}",
                f.values.len(),
                k.n_x
            )));
        }
    }
    Ok(())
}

/// Midpoint-rule approximation of `||a - b||_{L^p(K)}`. Fields are given one
/// per time in `times`, each on the x-midpoints of `k`.
pub fn lp_distance(
    field_a: &[SolutionField],
    field_b: &[SolutionField],
    k: &WindowK,
    p: f64,
    times: &[f64],
) -> Result<f64, TransportError> {
    k.validate()?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(TransportError::InvalidExponent(p));
    }
    if times.len() != k.n_t {
        return Err(TransportError::GridMismatch(format!(
            "{} times for n_t = {}",
            times.len(),
            k.n_t
        )));
    }
    check_fields(field_a, k, times, "first")?;
    check_fields(field_b, k, times, "second")?;
    for (a, b) in field_a.iter().zip(field_b) {
        if a.xs != b.xs {
            return Err(TransportError::GridMismatch(format!("x grids differ at t={}", a.time)));
        }
    }
    let sum: f64 = field_a
        .iter()
        .zip(field_b)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values))
        .map(|(u, v)| (u - v).abs().powf(p))
        .sum();
    Ok((sum * k.cell_area()).powf(1.0 / p))
}

/// Fields of `u^(N)` on every grid time of `k`.
pub fn fields_on_window(
    medium: &GoupillaudMedium,
    datum: &InitialDatum,
    k: &WindowK,
) -> Result<Vec<SolutionField>, TransportError> {
    let xs = k.xs();
    k.times()
        .into_iter()
        .map(|t| solve_on_medium(medium, datum, t, &xs))
        .collect()
}

/// Distance of `u^(N)` to the finest-level solution, for each requested level.
pub fn convergence_table(
    path: &LevyPathSample,
    datum: &InitialDatum,
    k: &WindowK,
    p: f64,
    levels: &[u32],
) -> Result<Vec<(u32, f64)>, TransportError> {
    k.validate()?;
    datum.validate()?;
    let times = k.times();
    let reference = fields_on_window(&GoupillaudMedium::build(path, path.level())?, datum, k)?;
    levels
        .iter()
        .map(|&n| {
            let fields = fields_on_window(&GoupillaudMedium::build(path, n)?, datum, k)?;
            Ok((n, lp_distance(&fields, &reference, k, p, &times)?))
        })
        .collect()
}

/// CSV with header `N,distance,p`.
pub fn write_convergence_csv<W: Write>(table: &[(u32, f64)], p: f64, out: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "distance", "p"])?;
    for &(n, d) in table {
        w.write_record([n.to_string(), fmt17(d), fmt17(p)])?;
    }
    w.flush()?;
    Ok(())
}
