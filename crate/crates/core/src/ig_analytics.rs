//! Densities for the two-sided inverse Gaussian (stable-1/2) subordinator
//! and the law of the base points of its limit characteristics.
//!
//! All formulas use standard Brownian motion: `I(t)` is the first passage
//! time of level `t`, with density
//! `f_t(v) = t (2 pi)^(-1/2) v^(-3/2) exp(-t^2 / (2 v))` on `v > 0`.
//! For the level `x` the hitting time `s = I*(x)` is the running maximum
//! `M(x)`, the undershoot `I(s-)` is its argmax and the overshoot `I(s)` the
//! next passage above it.
//!
//! The base point `I(I*(x) - t)` is assembled from three disjoint cases:
//!
//! * `x > 0, s >= t`: the base point lies inside the undershoot interval and
//!   follows the bridge of `I` from `(0, 0)` to `(s, y)` at time `s - t`;
//! * `x >= 0, s < t`: the base point is `-I'(t - s)` for an independent copy;
//! * `x < 0`: the base point is `y - I'(t)` with `y` the undershoot.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::{fmt17, ExportError};
use crate::quadrature::{
    integrate_adaptive, integrate_semi_infinite, integrate_sqrt_endpoint, integrate_sqrt_endpoint_with_distance,
    QuadratureError, QuadratureResult, QuadratureSpec, SingularEnd,
};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Beyond this many standard deviations the Gaussian factor `e^(-u^2/2)`
/// is below `e^(-72)` and the remaining range is dropped.
const GAUSS_CUTOFF: f64 = 12.0;

pub const CONVENTION: &str = "standard-brownian-motion";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IgError {
    #[error("time must be nonzero: the law of I(0) is the point mass at 0")]
    ZeroTime,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot condition on f_I({s})({y}) = 0")]
    NullConditioning { s: f64, y: f64 },
    #[error("(x, s, y) = ({x}, {s}, {y}) lies in no case region: {region}")]
    NoCase {
        x: f64,
        s: f64,
        y: f64,
        region: &'static str,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

fn ln_ig_positive(t: f64, v: f64) -> f64 {
    t.ln() - LN_SQRT_2PI - 1.5 * v.ln() - t * t / (2.0 * v)
}

/// Density of `I(t)` at `v`; for `t < 0` the law of `I(t) = -I'(|t|)`.
pub fn ig_marginal_density(t: f64, v: f64) -> Result<f64, IgError> {
    if t == 0.0 {
        return Err(IgError::ZeroTime);
    }
    if !t.is_finite() || v.is_nan() {
        return Err(IgError::InvalidArgument(format!("t = {t}, v = {v}")));
    }
    let (t, v) = if t > 0.0 { (t, v) } else { (-t, -v) };
    Ok(if v > 0.0 && v.is_finite() {
        ln_ig_positive(t, v).exp()
    } else {
        0.0
    })
}

/// Joint density of hitting time `s`, undershoot `a` and overshoot `b` of
/// level `x > 0`.
pub fn triple_density(x: f64, s: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && s > 0.0 && a > 0.0 && a <= x && x <= b && b > a) {
        return 0.0;
    }
    let ln = s.ln() - (2.0 * PI).ln() - 1.5 * a.ln() - 1.5 * (b - a).ln() - s * s / (2.0 * a);
    ln.exp()
}

/// `ln` of the hitting-time / undershoot density for `x > 0`, with the
/// distance `d = x - y` passed separately.
fn ln_gauss1(s: f64, y: f64, d: f64) -> f64 {
    s.ln() - PI.ln() - 1.5 * y.ln() - 0.5 * d.ln() - s * s / (2.0 * y)
}

fn gauss1(x: f64, s: f64, y: f64) -> f64 {
    if !(x > 0.0 && s > 0.0 && y > 0.0 && y < x) {
        return 0.0;
    }
    ln_gauss1(s, y, x - y).exp()
}

/// Integrand of the negative-level formula at `a` in `(x, 0)`.
fn gauss2_integrand(s: f64, y: f64, a: f64) -> f64 {
    if !(a < 0.0) || !(y < a) {
        return 0.0;
    }
    let ln = (-s).ln() - (2.0 * PI).ln() - 1.5 * (-a).ln() - 1.5 * (a - y).ln() + s * s / (2.0 * a);
    ln.exp()
}

/// Joint density of the hitting time `s` of level `x` and the undershoot `y`.
///
/// For `x > 0` this is closed form on `s > 0, 0 < y < x`. For `x < 0` it is
/// the integral over `a` in `(x, 0)` of the mirrored triple density, on
/// `s < 0, y < x`. Everywhere else the density is zero.
pub fn hit_under_density(x: f64, s: f64, y: f64, spec: &QuadratureSpec) -> Result<f64, IgError> {
    if x > 0.0 {
        Ok(gauss1(x, s, y))
    } else if x < 0.0 && s < 0.0 && y < x {
        let r = integrate_sqrt_endpoint(|a| gauss2_integrand(s, y, a), x, 0.0, SingularEnd::Right, spec)?;
        Ok(r.value.max(0.0))
    } else {
        Ok(0.0)
    }
}

/// Density of the undershoot `y < x < 0`, i.e. the negative-level joint
/// density integrated over `s < 0`. The `s`-integral is elementary
/// (`int (-s) e^(s^2/(2a)) ds = |a|`); the remaining `a`-integral is done
/// numerically.
pub fn undershoot_density_negative(x: f64, y: f64, spec: &QuadratureSpec) -> Result<QuadratureResult, IgError> {
    if !(x < 0.0 && y < x) {
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            subdivisions_used: 0,
        });
    }
    // integrand (2 pi)^-1 |a|^(-1/2) (a - y)^(-3/2) on (x, 0); peaks at a = x
    // when y is close to x, so that part is split off
    let g = |a: f64| (-a).powf(-0.5) * (a - y).powf(-1.5) / (2.0 * PI);
    let split = x + (-x * 0.5).min(10.0 * (x - y));
    let near = integrate_adaptive(g, x, split, spec)?;
    let far = integrate_sqrt_endpoint(g, split, 0.0, SingularEnd::Right, spec)?;
    Ok(QuadratureResult {
        value: near.value + far.value,
        error_estimate: near.error_estimate + far.error_estimate,
        subdivisions_used: near.subdivisions_used + far.subdivisions_used,
    })
}

fn ln_bridge(r: f64, s: f64, y: f64, z: f64) -> f64 {
    ln_ig_positive(r, z) + ln_ig_positive(s - r, y - z) - ln_ig_positive(s, y)
}

/// Density at `z` of `I(r)` given `I(s) = y`.
pub fn bridge_density(r: f64, s: f64, y: f64, z: f64) -> Result<f64, IgError> {
    if !(r > 0.0 && s > r && y > 0.0) || !s.is_finite() || !y.is_finite() {
        return Err(IgError::InvalidArgument(format!(
            "bridge needs 0 < r < s and y > 0, got r = {r}, s = {s}, y = {y}"
        )));
    }
    if ln_ig_positive(s, y) == f64::NEG_INFINITY {
        return Err(IgError::NullConditioning { s, y });
    }
    if !(z > 0.0 && z < y) {
        return Ok(0.0);
    }
    Ok(ln_bridge(r, s, y, z).exp())
}

/// Conditioning data: level `x`, elapsed time `t`, hitting time `s`,
/// undershoot `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseInputs {
    pub x: f64,
    pub t: f64,
    pub s: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseRegion {
    /// `x >= y > 0`, `s >= t`: bridge.
    Bridge,
    /// `x >= 0`, `0 <= s < t`: independent copy on the negative axis.
    NegativeCopy,
    /// `x < 0`, `s < 0`: independent copy below the undershoot.
    BelowUndershoot,
}

impl CaseInputs {
    pub fn region(&self) -> Result<CaseRegion, IgError> {
        let Self { x, t, s, y } = *self;
        let none = |region| IgError::NoCase { x, s, y, region };
        if !(t > 0.0) {
            return Err(IgError::InvalidArgument(format!("t must be positive, got {t}")));
        }
        if x >= 0.0 {
            if s < 0.0 {
                return Err(none("hitting time of a nonnegative level is nonnegative"));
            }
            if s < t {
                return Ok(CaseRegion::NegativeCopy);
            }
            if y > 0.0 && y <= x {
                return Ok(CaseRegion::Bridge);
            }
            return Err(none("s >= t requires 0 < y <= x"));
        }
        if s < 0.0 {
            return Ok(CaseRegion::BelowUndershoot);
        }
        Err(none("hitting time of a negative level is negative"))
    }
}

/// Conditional density of the base point at `z` given hitting time and
/// undershoot.
pub fn conditional_past_density(c: CaseInputs, z: f64) -> Result<f64, IgError> {
    match c.region()? {
        CaseRegion::Bridge => {
            if c.s == c.t {
                // bridge at time 0: point mass at z = 0
                return Ok(0.0);
            }
            bridge_density(c.s - c.t, c.s, c.y, z)
        }
        CaseRegion::NegativeCopy => ig_marginal_density(c.t - c.s, -z),
        CaseRegion::BelowUndershoot => ig_marginal_density(c.t, c.y - z),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgQuery {
    pub x: f64,
    pub t: f64,
    pub z_grid: Vec<f64>,
}

impl IgQuery {
    pub fn new(x: f64, t: f64, z_grid: Vec<f64>) -> Self {
        Self { x, t, z_grid }
    }

    /// Query on [`default_z_grid`].
    pub fn with_default_grid(x: f64, t: f64) -> Self {
        Self::new(x, t, default_z_grid(x, t))
    }

    pub fn validate(&self) -> Result<(), IgError> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(IgError::InvalidArgument(format!(
                "t must be positive and finite, got {}",
                self.t
            )));
        }
        if !self.x.is_finite() {
            return Err(IgError::InvalidArgument(format!("x must be finite, got {}", self.x)));
        }
        if self.z_grid.len() < 2 {
            return Err(IgError::InvalidArgument("z grid needs at least two points".into()));
        }
        if self.z_grid.iter().any(|z| !z.is_finite()) || self.z_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(IgError::InvalidArgument(
                "z grid must be finite and strictly increasing".into(),
            ));
        }
        if self.x > 0.0 && self.z_grid.contains(&0.0) {
            return Err(IgError::InvalidArgument(
                "the density diverges at z = 0 for x > 0".into(),
            ));
        }
        Ok(())
    }
}

fn geometric(from: f64, to: f64, n: usize) -> impl Iterator<Item = f64> {
    let ratio = (to / from).powf(1.0 / (n - 1) as f64);
    (0..n).map(move |i| if i + 1 == n { to } else { from * ratio.powi(i as i32) })
}

/// 512 points: a geometric ladder on the negative side down to `-2000 t^2`
/// (the tail decays like `|z|^(-3/2)`), geometric refinement on both sides
/// of the spike at `0`, uniform spacing up to `x` and a few points beyond.
pub fn default_z_grid(x: f64, t: f64) -> Vec<f64> {
    let far = 2000.0 * t * t.max(1.0);
    let mut z: Vec<f64> = Vec::with_capacity(512);
    if x > 0.0 {
        let knee = (x / 16.0).min(0.5);
        z.extend(geometric(1e-9 * x, far, 220).map(|v| -v));
        z.reverse();
        z.extend(geometric(1e-9 * x, knee, 120));
        let n_uniform = 160;
        let h = (x - knee) / n_uniform as f64;
        z.extend((1..=n_uniform).map(|i| knee + h * i as f64));
        z.extend((1..=12).map(|i| x + x * i as f64 / 48.0));
    } else {
        // no spike: the density vanishes smoothly at z = x
        z.extend(geometric(1e-6 * t * t, far, 480).map(|v| x - v));
        z.reverse();
        z.extend((1..=32).map(|i| x + i as f64 * 0.05 * t * t));
    }
    z
}

/// Pointwise base-point density with quadrature diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: f64,
    pub t: f64,
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub err: Vec<f64>,
    /// `false` where some quadrature did not reach its tolerance; the value
    /// is then the best available estimate.
    pub converged: Vec<bool>,
    /// Trapezoid integral of `f` over the grid.
    pub mass: f64,
}

impl DensityCurve {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// Running trapezoid integral, clipped to `[0, 1]`.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.z.len());
        out.push((self.z[0], 0.0));
        for i in 1..self.z.len() {
            acc += 0.5 * (self.f[i] + self.f[i - 1]) * (self.z[i] - self.z[i - 1]);
            out.push((self.z[i], acc.clamp(0.0, 1.0)));
        }
        out
    }

    /// Linear interpolation of `f`, zero outside the grid.
    pub fn interpolate(&self, z: f64) -> f64 {
        let n = self.z.len();
        if !(z >= self.z[0] && z <= self.z[n - 1]) {
            return 0.0;
        }
        let i = self.z.partition_point(|&v| v <= z);
        if i == n {
            return self.f[n - 1];
        }
        let (z0, z1) = (self.z[i - 1], self.z[i]);
        self.f[i - 1] + (self.f[i] - self.f[i - 1]) * (z - z0) / (z1 - z0)
    }

    /// Integral of the interpolant over `[lo, hi]`.
    pub fn integrate_between(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let mut pts = vec![lo];
        pts.extend(self.z.iter().copied().filter(|&v| v > lo && v < hi));
        pts.push(hi);
        pts.windows(2)
            .map(|w| 0.5 * (self.interpolate(w[0]) + self.interpolate(w[1])) * (w[1] - w[0]))
            .sum()
    }

    /// CSV with header `z,f,err`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "f", "err"])?;
        for i in 0..self.z.len() {
            w.write_record([fmt17(self.z[i]), fmt17(self.f[i]), fmt17(self.err[i])])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with header `z,F`.
    pub fn write_cdf_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "F"])?;
        for (z, f) in self.cdf() {
            w.write_record([fmt17(z), fmt17(f)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata(&self, spec: &QuadratureSpec) -> DensityMetadata {
        DensityMetadata {
            x: self.x,
            t: self.t,
            convention: CONVENTION.to_string(),
            quadrature: *spec,
            n_points: self.z.len(),
            mass: self.mass,
            all_converged: self.all_converged(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMetadata {
    pub x: f64,
    pub t: f64,
    pub convention: String,
    pub quadrature: QuadratureSpec,
    pub n_points: usize,
    pub mass: f64,
    pub all_converged: bool,
}

/// Result of one nested integration: value, error bound, convergence.
#[derive(Debug, Clone, Copy)]
struct Nested {
    value: f64,
    err: f64,
    converged: bool,
}

/// Tracks the worst relative accuracy of the inner integrals.
#[derive(Default)]
struct InnerStats {
    worst_rel: f64,
    failed: bool,
}

impl InnerStats {
    fn take(&mut self, r: Result<QuadratureResult, QuadratureError>) -> f64 {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                self.failed = true;
                match e.best_estimate() {
                    Some(best) => best,
                    None => return f64::NAN,
                }
            }
        };
        if r.value > 0.0 {
            self.worst_rel = self.worst_rel.max(r.error_estimate / r.value);
        }
        r.value
    }
}

fn finish(outer: Result<QuadratureResult, QuadratureError>, stats: InnerStats) -> Nested {
    let (r, ok) = match outer {
        Ok(r) => (r, true),
        Err(e) => match e.best_estimate() {
            Some(best) => (best, false),
            None => {
                return Nested {
                    value: f64::NAN,
                    err: f64::INFINITY,
                    converged: false,
                }
            }
        },
    };
    let value = r.value.max(0.0);
    Nested {
        value,
        err: r.error_estimate + stats.worst_rel.min(1.0) * value,
        converged: ok && !stats.failed,
    }
}

fn inner_spec(spec: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: spec.abs_tol * 1e-3,
        rel_tol: spec.rel_tol * 0.1,
        ..*spec
    }
}

/// `x > 0`, `0 < z < x`: outer integral over `r = s - t`, inner over the
/// undershoot `y` in `(z, x)`.
fn bridge_part(x: f64, t: f64, z: f64, spec: &QuadratureSpec) -> Nested {
    let ispec = inner_spec(spec);
    let mut stats = InnerStats::default();
    // f_I(r)(z) carries the factor exp(-r^2 / (2 z)); the rest is bounded in r
    let r_max = GAUSS_CUTOFF * z.sqrt();
    let outer = integrate_adaptive(
        |r| {
            if r <= 0.0 {
                return 0.0;
            }
            let s = t + r;
            let inner = integrate_sqrt_endpoint_with_distance(
                |y, d| {
                    if !(y > z) || d <= 0.0 {
                        return 0.0;
                    }
                    (ln_bridge(r, s, y, z) + ln_gauss1(s, y, d)).exp()
                },
                z,
                x,
                SingularEnd::Right,
                &ispec,
            );
            stats.take(inner)
        },
        0.0,
        r_max,
        spec,
    );
    finish(outer, stats)
}

/// `x > 0`, `z < 0`: hitting time `s < t`, the base point is `-I'(t - s)`.
fn negative_copy_part(x: f64, t: f64, z: f64, spec: &QuadratureSpec) -> Nested {
    let ispec = inner_spec(spec);
    let mut stats = InnerStats::default();
    let v = -z;
    // in u = t - s the factor f_I(u)(v) is u exp(-u^2 / (2 v)) up to constants
    let u_max = t.min(GAUSS_CUTOFF * v.sqrt());
    let outer = integrate_adaptive(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let s = t - u;
            if s <= 0.0 {
                return 0.0;
            }
            let cond = ln_ig_positive(u, v);
            let inner = integrate_sqrt_endpoint_with_distance(
                |y, d| {
                    if y <= 0.0 || d <= 0.0 {
                        return 0.0;
                    }
                    (cond + ln_gauss1(s, y, d)).exp()
                },
                0.0,
                x,
                SingularEnd::Right,
                &ispec,
            );
            stats.take(inner)
        },
        0.0,
        u_max,
        spec,
    );
    finish(outer, stats)
}

/// `x < 0`, `z < x`: the base point is `y - I'(t)`, integrated against the
/// undershoot density on `(z, x)`.
fn below_undershoot_part(x: f64, t: f64, z: f64, spec: &QuadratureSpec) -> Nested {
    let ispec = inner_spec(spec);
    let mut stats = InnerStats::default();
    let outer = integrate_sqrt_endpoint_with_distance(
        |y, _d| {
            let w = y - z;
            if w <= 0.0 {
                return 0.0;
            }
            let cond = ln_ig_positive(t, w).exp();
            if cond == 0.0 {
                return 0.0;
            }
            cond * stats.take(undershoot_density_negative(x, y, &ispec).map_err(|e| match e {
                IgError::Quadrature(q) => q,
                _ => QuadratureError::InvalidSpec("unexpected error"),
            }))
        },
        z,
        x,
        SingularEnd::Right,
        spec,
    );
    finish(outer, stats)
}

fn density_at(x: f64, t: f64, z: f64, spec: &QuadratureSpec) -> Nested {
    let zero = Nested {
        value: 0.0,
        err: 0.0,
        converged: true,
    };
    if x == 0.0 {
        // L*(0) = 0, base point -I(t)
        return Nested {
            value: ig_marginal_density(t, -z).unwrap_or(0.0),
            ..zero
        };
    }
    if x > 0.0 {
        if z > 0.0 && z < x {
            bridge_part(x, t, z, spec)
        } else if z < 0.0 {
            negative_copy_part(x, t, z, spec)
        } else {
            zero
        }
    } else if z < x {
        below_undershoot_part(x, t, z, spec)
    } else {
        zero
    }
}

/// Density of `I(I*(x) - t)` on the query grid, evaluated in parallel.
pub fn basepoint_density(q: &IgQuery, spec: &QuadratureSpec) -> Result<DensityCurve, IgError> {
    q.validate()?;
    spec.validate()?;
    let points: Vec<Nested> = q.z_grid.par_iter().map(|&z| density_at(q.x, q.t, z, spec)).collect();
    let mut curve = DensityCurve {
        x: q.x,
        t: q.t,
        z: q.z_grid.clone(),
        f: points
            .iter()
            .map(|p| if p.value.is_nan() { 0.0 } else { p.value })
            .collect(),
        err: points.iter().map(|p| p.err).collect(),
        converged: points.iter().map(|p| p.converged && !p.value.is_nan()).collect(),
        mass: 0.0,
    };
    curve.mass = curve.cdf_unclipped_total();
    Ok(curve)
}

impl DensityCurve {
    fn cdf_unclipped_total(&self) -> f64 {
        self.z
            .windows(2)
            .zip(self.f.windows(2))
            .map(|(z, f)| 0.5 * (f[0] + f[1]) * (z[1] - z[0]))
            .sum()
    }
}

pub fn basepoint_cdf(q: &IgQuery, spec: &QuadratureSpec) -> Result<Vec<(f64, f64)>, IgError> {
    Ok(basepoint_density(q, spec)?.cdf())
}

/// CDF of the hitting time `M(x) ~ |N(0, x)|` of level `x > 0`.
pub fn running_max_cdf(x: f64, s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        statrs::function::erf::erf(s / (2.0 * x).sqrt())
    }
}

/// Density of `M(x)`.
pub fn running_max_density(x: f64, s: f64) -> f64 {
    if s < 0.0 {
        0.0
    } else {
        (2.0 / (PI * x)).sqrt() * (-s * s / (2.0 * x)).exp()
    }
}

/// Mass of the joint hitting-time / undershoot density over `s > 0`,
/// `0 < y < x`: inner `y`-integral with the square-root end at `x`, outer
/// semi-infinite `s`-integral.
pub fn hit_under_mass(x: f64, spec: &QuadratureSpec) -> Result<QuadratureResult, IgError> {
    if !(x > 0.0) {
        return Err(IgError::InvalidArgument(format!("x must be positive, got {x}")));
    }
    let ispec = inner_spec(spec);
    let mut failure = None;
    let r = integrate_semi_infinite(
        |s| {
            if s <= 0.0 {
                return 0.0;
            }
            match integrate_sqrt_endpoint_with_distance(
                |y, d| {
                    if y > 0.0 && d > 0.0 {
                        ln_gauss1(s, y, d).exp()
                    } else {
                        0.0
                    }
                },
                0.0,
                x,
                SingularEnd::Right,
                &ispec,
            ) {
                Ok(r) => r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    e.best_estimate().map_or(f64::NAN, |b| b.value)
                }
            }
        },
        0.0,
        spec,
    )?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(r),
    }
}

/// `int_0^x` of the joint density over the undershoot, at fixed `s`.
pub fn hit_marginal(x: f64, s: f64, spec: &QuadratureSpec) -> Result<QuadratureResult, IgError> {
    if !(x > 0.0 && s > 0.0) {
        return Err(IgError::InvalidArgument(format!("need x, s > 0, got {x}, {s}")));
    }
    Ok(integrate_sqrt_endpoint_with_distance(
        |y, d| {
            if y > 0.0 && d > 0.0 {
                ln_gauss1(s, y, d).exp()
            } else {
                0.0
            }
        },
        0.0,
        x,
        SingularEnd::Right,
        spec,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    /// Reference `|t| (2 pi)^-1/2 |v|^-3/2 exp(-t^2/(2|v|))` written out directly.
    fn ig_ref(t: f64, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        t / (2.0 * PI).sqrt() * v.powf(-1.5) * (-t * t / (2.0 * v)).exp()
    }

    #[test]
    fn marginal_values() {
        let v = ig_marginal_density(1.0, 1.0).unwrap();
        assert!((v - (-0.5f64).exp() / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.241_971).abs() < 1e-6);
        assert_eq!(ig_marginal_density(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(ig_marginal_density(1.0, -2.0).unwrap(), 0.0);
        assert_eq!(ig_marginal_density(-1.0, -1.0).unwrap(), v);
        assert_eq!(ig_marginal_density(-1.0, 1.0).unwrap(), 0.0);
        assert!(matches!(ig_marginal_density(0.0, 1.0), Err(IgError::ZeroTime)));
        for &(t, x) in &[(0.3, 0.01), (2.0, 5.0), (1.0, 1e-3)] {
            let a = ig_marginal_density(t, x).unwrap();
            assert!((a - ig_ref(t, x)).abs() <= 1e-13 * ig_ref(t, x).max(1e-300));
        }
    }

    #[test]
    fn marginal_normalization() {
        for t in [0.5, 1.0, 2.0] {
            let r = integrate_semi_infinite(|v| ig_marginal_density(t, v).unwrap(), 0.0, &spec()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-6, "{t}: {r}");
        }
    }

    #[test]
    fn triple_values() {
        assert_eq!(triple_density(1.0, 1.0, 1.5, 2.0), 0.0);
        assert_eq!(triple_density(1.0, 0.0, 0.5, 2.0), 0.0);
        let want = 1.0 / (2.0 * PI * (0.125f64 * 3.375).sqrt()) * (-1.0f64).exp();
        let got = triple_density(1.0, 1.0, 0.5, 2.0);
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.0901).abs() < 1e-4);
    }

    #[test]
    fn gauss1_values() {
        let s = spec();
        assert_eq!(hit_under_density(1.0, 1.0, 1.5, &s).unwrap(), 0.0);
        assert_eq!(hit_under_density(1.0, 1.0, -0.1, &s).unwrap(), 0.0);
        assert_eq!(hit_under_density(1.0, -1.0, 0.5, &s).unwrap(), 0.0);
        let got = hit_under_density(1.0, 1.0, 0.5, &s).unwrap();
        let want = 1.0 / (PI * (0.125f64 * 0.5).sqrt()) * (-1.0f64).exp();
        assert!((got - want).abs() < 1e-14);
        // 4 / (pi e) = 0.4683987...
        assert!((got - 0.468_398_65).abs() < 1e-8);
    }

    #[test]
    fn gauss1_marginal_is_half_normal() {
        let r = hit_marginal(1.0, 1.0, &spec()).unwrap();
        let want = (2.0 / PI).sqrt() * (-0.5f64).exp();
        assert!((r.value - want).abs() < 1e-8);
        assert!((want - 0.48394).abs() < 1e-5);
    }

    #[test]
    fn negative_level_undershoot_closed_form() {
        // int over a of |a|^-1/2 (a-y)^-3/2 / (2 pi) = sqrt|x| / (pi |y| sqrt(x - y))
        let s = spec();
        for &(x, y) in &[(-1.0, -1.5), (-1.0, -1.0001), (-2.0, -30.0), (-0.5, -0.6)] {
            let got = undershoot_density_negative(x, y, &s).unwrap().value;
            let want = (-x).sqrt() / (PI * (-y) * (x - y).sqrt());
            assert!((got - want).abs() < 1e-7 * want, "{x} {y}: {got} vs {want}");
        }
    }

    #[test]
    fn gauss2_support_and_sign() {
        let s = spec();
        assert_eq!(hit_under_density(-1.0, 0.5, -2.0, &s).unwrap(), 0.0);
        assert_eq!(hit_under_density(-1.0, -0.5, -0.5, &s).unwrap(), 0.0);
        let v = hit_under_density(-1.0, -0.5, -2.0, &s).unwrap();
        assert!(v > 0.0 && v.is_finite());
        // the s-marginal reproduces the undershoot law
        let m = integrate_semi_infinite(|u| hit_under_density(-1.0, -u, -2.0, &s).unwrap(), 0.0, &s).unwrap();
        let want = 1.0 / (PI * 2.0 * 1.0);
        assert!((m.value - want).abs() < 1e-6, "{}", m.value);
    }

    #[test]
    fn bridge_cases() {
        assert_eq!(bridge_density(0.5, 1.0, 2.0, 0.0).unwrap(), 0.0);
        assert_eq!(bridge_density(0.5, 1.0, 2.0, 2.0).unwrap(), 0.0);
        assert_eq!(bridge_density(0.5, 1.0, 2.0, -1.0).unwrap(), 0.0);
        assert!(bridge_density(1.0, 1.0, 2.0, 1.0).is_err());
        assert!(matches!(
            bridge_density(0.5, 1e200, 1e-200, 1e-201),
            Err(IgError::NullConditioning { .. })
        ));
        for &(r, s, y) in &[(0.5, 1.0, 2.0), (1.0, 2.0, 1.0), (0.25, 1.0, 0.5)] {
            let m =
                crate::quadrature::integrate_sqrt_both_ends(|z| bridge_density(r, s, y, z).unwrap(), 0.0, y, &spec())
                    .unwrap();
            assert!((m.value - 1.0).abs() < 1e-5, "{r} {s} {y}: {m}");
        }
        for i in 1..40 {
            let z = 2.0 * i as f64 / 40.0;
            let a = bridge_density(0.5, 1.0, 2.0, z).unwrap();
            let b = bridge_density(0.5, 1.0, 2.0, 2.0 - z).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn conditional_cases() {
        let c = CaseInputs {
            x: 1.0,
            t: 1.0,
            s: 0.5,
            y: 0.3,
        };
        assert_eq!(c.region().unwrap(), CaseRegion::NegativeCopy);
        let v = conditional_past_density(c, -1.0).unwrap();
        let want = 0.5 / (2.0 * PI).sqrt() * (-0.125f64).exp();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.17603).abs() < 1e-5);
        assert_eq!(conditional_past_density(c, 0.5).unwrap(), 0.0);

        let c = CaseInputs {
            x: 3.0,
            t: 0.5,
            s: 1.0,
            y: 2.0,
        };
        assert_eq!(c.region().unwrap(), CaseRegion::Bridge);
        assert_eq!(
            conditional_past_density(c, 0.7).unwrap(),
            bridge_density(0.5, 1.0, 2.0, 0.7).unwrap()
        );
        let boundary = CaseInputs { s: 0.5, ..c };
        assert_eq!(boundary.region().unwrap(), CaseRegion::Bridge);

        let c = CaseInputs {
            x: -1.0,
            t: 1.0,
            s: -0.4,
            y: -1.5,
        };
        assert_eq!(c.region().unwrap(), CaseRegion::BelowUndershoot);
        assert_eq!(
            conditional_past_density(c, -2.5).unwrap(),
            ig_marginal_density(1.0, 1.0).unwrap()
        );
        assert_eq!(conditional_past_density(c, -1.0).unwrap(), 0.0);

        assert!(matches!(
            CaseInputs {
                x: 1.0,
                t: 1.0,
                s: 2.0,
                y: 1.5
            }
            .region(),
            Err(IgError::NoCase { .. })
        ));
        assert!(matches!(
            CaseInputs {
                x: -1.0,
                t: 1.0,
                s: 0.3,
                y: -1.5
            }
            .region(),
            Err(IgError::NoCase { .. })
        ));
    }

    /// Written-out density of the base point for `x > 0`, `0 < z < x`.
    fn positive_side_oracle(x: f64, t: f64, z: f64) -> f64 {
        (-t * t / (2.0 * (x - z))).exp() / (PI * (z * (x - z)).sqrt())
    }

    /// Negative side by a plain composite Simpson rule in `u = t - s`.
    fn negative_side_oracle(x: f64, t: f64, z: f64) -> f64 {
        let n = 20_000;
        let h = t / n as f64;
        let g = |u: f64| {
            let s = t - u;
            ig_ref(u, -z) * (2.0 / (PI * x)).sqrt() * (-s * s / (2.0 * x)).exp()
        };
        let mut acc = g(0.0) + g(t);
        for i in 1..n {
            acc += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn basepoint_density_matches_oracles() {
        let zs = vec![-50.0, -3.0, -0.5, -0.01, 0.01, 0.5, 3.0, 7.5, 7.99, 8.5];
        let q = IgQuery::new(8.0, 1.0, zs.clone());
        let c = basepoint_density(&q, &spec()).unwrap();
        assert!(c.all_converged());
        for (i, &z) in zs.iter().enumerate() {
            let want = if z > 0.0 && z < 8.0 {
                positive_side_oracle(8.0, 1.0, z)
            } else if z < 0.0 {
                negative_side_oracle(8.0, 1.0, z)
            } else {
                0.0
            };
            assert!(
                (c.f[i] - want).abs() <= 1e-6 * want + 1e-12,
                "z = {z}: {} vs {want}",
                c.f[i]
            );
        }
    }

    #[test]
    fn basepoint_x_zero_is_negative_copy() {
        let q = IgQuery::new(0.0, 1.5, vec![-4.0, -1.0, -0.1, 0.0, 0.5]);
        let c = basepoint_density(&q, &spec()).unwrap();
        for (z, f) in c.z.iter().zip(&c.f) {
            assert_eq!(*f, ig_marginal_density(1.5, -z).unwrap());
        }
    }

    #[test]
    fn basepoint_negative_level_support() {
        let q = IgQuery::new(-1.0, 1.0, vec![-40.0, -5.0, -2.0, -1.2, -0.9, 0.5]);
        let c = basepoint_density(&q, &spec()).unwrap();
        assert!(c.f[..4].iter().all(|&f| f > 0.0));
        assert_eq!(&c.f[4..], &[0.0, 0.0]);
    }

    #[test]
    fn grid_validation() {
        assert!(basepoint_density(&IgQuery::new(8.0, 0.0, vec![1.0, 2.0]), &spec()).is_err());
        assert!(basepoint_density(&IgQuery::new(8.0, 1.0, vec![2.0, 1.0]), &spec()).is_err());
        assert!(basepoint_density(&IgQuery::new(8.0, 1.0, vec![-1.0, 0.0, 1.0]), &spec()).is_err());
        let g = default_z_grid(8.0, 1.0);
        assert_eq!(g.len(), 512);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(!g.contains(&0.0));
        let g = default_z_grid(-1.0, 1.0);
        assert_eq!(g.len(), 512);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn curve_helpers() {
        let c = DensityCurve {
            x: 1.0,
            t: 1.0,
            z: vec![0.0, 1.0, 2.0],
            f: vec![0.0, 1.0, 0.0],
            err: vec![0.0; 3],
            converged: vec![true; 3],
            mass: 1.0,
        };
        assert_eq!(c.cdf(), vec![(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)]);
        assert_eq!(c.interpolate(0.5), 0.5);
        assert_eq!(c.interpolate(3.0), 0.0);
        assert!((c.integrate_between(0.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((c.integrate_between(0.5, 1.5) - 0.75).abs() < 1e-15);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("z,f,err\n"));
        let mut buf = Vec::new();
        c.write_cdf_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("z,F\n"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn densities_nonnegative(x in -5.0f64..5.0, s in -5.0f64..5.0, a in -5.0f64..10.0, b in -5.0f64..10.0, t in 0.01f64..3.0) {
                prop_assert!(triple_density(x, s, a, b) >= 0.0);
                prop_assert!(ig_marginal_density(t, a).unwrap() >= 0.0);
                if x > 0.0 {
                    prop_assert!(hit_under_density(x, s, a, &QuadratureSpec::default()).unwrap() >= 0.0);
                }
                if let Ok(v) = bridge_density(t, t + 1.0, b.abs() + 0.1, a) {
                    prop_assert!(v >= 0.0);
                }
            }

            #[test]
            fn triple_reduces_to_gauss1(x in 0.2f64..5.0, s in 0.05f64..3.0, frac in 0.01f64..0.99) {
                let y = frac * x;
                let r = integrate_semi_infinite(|b| triple_density(x, s, y, b), x, &QuadratureSpec::default()).unwrap();
                let g = gauss1(x, s, y);
                prop_assert!((r.value - g).abs() < 1e-6, "{} vs {}", r.value, g);
            }
        }
    }
}
