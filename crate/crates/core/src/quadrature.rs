//! Globally adaptive Gauss–Kronrod (G10/K21) integration on finite intervals,
//! with substitutions for square-root endpoint singularities and for
//! semi-infinite domains.
//!
//! Every rule only samples interior abscissas, so integrands may be singular
//! (or undefined) exactly at the interval endpoints.

use std::fmt;

use thiserror::Error;

/// Kronrod abscissas on [-1, 1] (non-negative half, descending). Even
/// indices are Kronrod-only points, odd indices are shared with the Gauss rule.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_980_645_868,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the shared abscissas `XGK[1], XGK[3], .., XGK[9]`.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and budget for one adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self, QuadratureError> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(self.abs_tol > 0.0) || !self.abs_tol.is_finite() {
            return Err(QuadratureError::InvalidSpec("abs_tol must be positive"));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(QuadratureError::InvalidSpec("rel_tol must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(QuadratureError::InvalidSpec("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    /// Accuracy target for a given integral magnitude.
    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions_used: usize,
}

impl fmt::Display for QuadratureResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (+/- {:.3e}, {} intervals)",
            self.value, self.error_estimate, self.subdivisions_used
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(&'static str),
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("integrand returned {value} at x = {at}")]
    NonFinite { at: f64, value: f64 },
    #[error("no convergence within {} subdivisions, best estimate {}", best.subdivisions_used, best)]
    NotConverged { best: QuadratureResult },
    #[error("interval width reached floating-point resolution near x = {at}, best estimate {best}")]
    RoundOff { at: f64, best: QuadratureResult },
}

impl QuadratureError {
    /// Best available estimate carried by convergence failures.
    pub fn best_estimate(&self) -> Option<QuadratureResult> {
        match self {
            Self::NotConverged { best } | Self::RoundOff { best, .. } => Some(*best),
            _ => None,
        }
    }
}

/// Which end of the interval carries the `(distance)^(-1/2)` singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularEnd {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn checked<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64, QuadratureError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadratureError::NonFinite { at: x, value: v })
    }
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = checked(f, center)?;

    let mut res_k = WGK[10] * f_center;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let abs_half = half.abs();
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, res_abs * abs_half, res_asc * abs_half);
    Ok(Segment { a, b, value, error })
}

fn totals(segments: &[Segment]) -> (f64, f64) {
    segments.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error))
}

/// Globally adaptive G10/K21 integration of `f` over `[a, b]`: the segment
/// with the largest error estimate is bisected until the summed estimate is
/// within `max(abs_tol, rel_tol * |value|)`.
pub fn integrate_adaptive<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadratureResult, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    spec.validate()?;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(QuadratureError::InvalidInterval { a, b });
    }

    let mut segments = vec![kronrod21(&mut f, a, b)?];
    loop {
        let (value, error) = totals(&segments);
        let result = QuadratureResult {
            value,
            error_estimate: error,
            subdivisions_used: segments.len(),
        };
        if error <= spec.target(value) {
            return Ok(result);
        }
        if segments.len() >= spec.max_subdivisions {
            return Err(QuadratureError::NotConverged { best: result });
        }

        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let seg = segments[worst];
        let mid = 0.5 * (seg.a + seg.b);
        // 21 interior nodes must stay distinct from the endpoints
        let min_width = 1e3 * f64::EPSILON * seg.a.abs().max(seg.b.abs()).max(f64::MIN_POSITIVE);
        if !(mid > seg.a && mid < seg.b) || (seg.b - seg.a) < min_width {
            return Err(QuadratureError::RoundOff { at: mid, best: result });
        }
        let left = kronrod21(&mut f, seg.a, mid)?;
        let right = kronrod21(&mut f, mid, seg.b)?;
        segments[worst] = left;
        segments.push(right);
    }
}

/// Like [`integrate_sqrt_endpoint`], but the integrand also receives the
/// exact distance from the singular end, so `(dist)^(-1/2)` factors can be
/// evaluated without cancellation close to that end.
pub fn integrate_sqrt_endpoint_with_distance<F>(
    f: F,
    a: f64,
    b: f64,
    singular_end: SingularEnd,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut f = f;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    let span = (b - a).sqrt();
    match singular_end {
        SingularEnd::Right => integrate_adaptive(
            |u| {
                let d = u * u;
                2.0 * u * f(b - d, d)
            },
            0.0,
            span,
            spec,
        ),
        SingularEnd::Left => integrate_adaptive(
            |u| {
                let d = u * u;
                2.0 * u * f(a + d, d)
            },
            0.0,
            span,
            spec,
        ),
    }
}

/// Integrates `f` over `[a, b]` when `f(y)` behaves like
/// `(distance to singular_end)^(-1/2)`; substitutes `y = b - u^2`
/// (or `y = a + u^2`) and integrates the smooth result adaptively.
pub fn integrate_sqrt_endpoint<F>(
    f: F,
    a: f64,
    b: f64,
    singular_end: SingularEnd,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    integrate_sqrt_endpoint_with_distance(|y, _| f(y), a, b, singular_end, spec)
}

/// Integrates `f` over `[a, b]` with square-root substitutions at both ends,
/// splitting at the midpoint.
pub fn integrate_sqrt_both_ends<F>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    let mid = 0.5 * (a + b);
    let half_spec = QuadratureSpec {
        abs_tol: 0.5 * spec.abs_tol,
        ..*spec
    };
    let left = integrate_sqrt_endpoint(&mut f, a, mid, SingularEnd::Left, &half_spec)?;
    let right = integrate_sqrt_endpoint(&mut f, mid, b, SingularEnd::Right, &half_spec)?;
    Ok(QuadratureResult {
        value: left.value + right.value,
        error_estimate: left.error_estimate + right.error_estimate,
        subdivisions_used: left.subdivisions_used + right.subdivisions_used,
    })
}

/// Integrates a decaying `f` over `[a, inf)` through `x = a + u/(1-u)`,
/// `u` in (0, 1). The finite-interval integrand `f(x)/(1-u)^2` is handed to
/// the square-root endpoint rule at `u = 1`, which keeps algebraic tails
/// like `x^(-3/2)` smooth after substitution.
pub fn integrate_semi_infinite<F>(f: F, a: f64, spec: &QuadratureSpec) -> Result<QuadratureResult, QuadratureError>
where
    F: FnMut(f64) -> f64,
{
    let mut f = f;
    if !a.is_finite() {
        return Err(QuadratureError::InvalidInterval { a, b: f64::INFINITY });
    }
    integrate_sqrt_endpoint_with_distance(
        |_u, d| {
            if d <= 0.0 {
                return 0.0;
            }
            // d = 1 - u, computed exactly by the substitution
            let x = a + (1.0 - d) / d;
            f(x) / d / d
        },
        0.0,
        1.0,
        SingularEnd::Right,
        spec,
    )
}
