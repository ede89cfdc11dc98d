//! Monte Carlo samplers for base points and Brownian functionals, and the
//! histogram / Kolmogorov-Smirnov comparisons against the analytic laws.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::export::{fmt17, ExportError};
use crate::goupillaud::basepoint;
use crate::ig_analytics::DensityCurve;
use crate::levy_paths::{LevyPathSample, PathError, PathGenerator, ProcessSpec};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {n} samples left the index window [{k_min}, {k_max}]; widen the k range")]
    WindowExhausted {
        failed: usize,
        n: usize,
        k_min: i64,
        k_max: i64,
    },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("histogram edges must be finite and strictly increasing ({0} given)")]
    InvalidEdges(usize),
}

/// Medium for base-point sampling: a Lévy family or the deterministic line
/// `x = drift * t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasepointModel {
    Levy(ProcessSpec),
    PureDrift { drift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub n_max: u32,
    pub k_min: i64,
    pub k_max: i64,
    pub seed: RngSeed,
    pub bins: usize,
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if self.n_samples == 0 {
            return Err(McError::InvalidConfig("n_samples must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(McError::InvalidConfig("bins must be at least 2".into()));
        }
        if self.k_min > 0 || self.k_max < 0 {
            return Err(McError::InvalidConfig(format!(
                "window [{}, {}] must contain 0",
                self.k_min, self.k_max
            )));
        }
        if self.n_max > 40 {
            return Err(McError::InvalidConfig(format!("level {} is too fine", self.n_max)));
        }
        Ok(())
    }
}

/// Base-point draws in sample order; `failed` lists samples whose path did
/// not fit into the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasepointSamples {
    pub z: Vec<f64>,
    pub failed: Vec<usize>,
}

impl BasepointSamples {
    /// CSV with header `i,z`; `i` is the sample index.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "z"])?;
        let mut failed = self.failed.iter().peekable();
        let mut i = 0usize;
        for &z in &self.z {
            while failed.peek() == Some(&&i) {
                failed.next();
                i += 1;
            }
            w.write_record([i.to_string(), fmt17(z)])?;
            i += 1;
        }
        w.flush()?;
        Ok(())
    }
}

/// One base point `γ(x0, t0; 0)` per sample. Each sample builds only the
/// part of its path needed to reach `x0` and then look back `t0`; values
/// coincide with those of the full window.
fn one_basepoint(gen: &PathGenerator, x0: f64, t0: f64, k_min: i64, k_max: i64) -> Result<f64, PathError> {
    let path = gen.build_until_hit(x0, k_min, k_max)?;
    let hit = path.hitting_time(x0)?;
    let back = ((hit - t0) * path.grid().scale()).floor();
    let path = if back < path.grid().k_min as f64 {
        if back < k_min as f64 {
            return Err(PathError::OutOfRange(crate::levy_paths::OutOfRange {
                quantity: crate::levy_paths::Quantity::Time,
                value: hit - t0,
                lo: k_min as f64 * path.grid().dt(),
                hi: k_max as f64 * path.grid().dt(),
            }));
        }
        // Walk down without materializing the path: far below the origin a
        // stable path can be so large that later increments vanish in its
        // ulp, which a path object would reject. Same operation order as
        // the full-window accumulation, so the value is bitwise identical.
        let mut z = path.x(path.grid().k_min);
        for k in ((back as i64 + 1)..=path.grid().k_min).rev() {
            z -= gen.increment(k);
        }
        return Ok(z);
    } else {
        path
    };
    basepoint(&path, x0, t0)
}

pub fn sample_basepoints(
    model: &BasepointModel,
    x0: f64,
    t0: f64,
    cfg: &McConfig,
) -> Result<BasepointSamples, McError> {
    cfg.validate()?;
    if !(t0 > 0.0 && t0.is_finite() && x0.is_finite()) {
        return Err(McError::InvalidConfig(format!(
            "need finite x0 and t0 > 0, got {x0}, {t0}"
        )));
    }
    let draws: Vec<Result<f64, PathError>> = match *model {
        BasepointModel::Levy(spec) => {
            spec.validate()?;
            (0..cfg.n_samples as u64)
                .into_par_iter()
                .map(|i| {
                    let gen = PathGenerator::new(spec, cfg.n_max, cfg.seed.with_stream(i))?;
                    one_basepoint(&gen, x0, t0, cfg.k_min, cfg.k_max)
                })
                .collect()
        }
        BasepointModel::PureDrift { drift } => {
            let path = LevyPathSample::pure_drift(drift, cfg.n_max, cfg.k_min, cfg.k_max)?;
            let b = basepoint(&path, x0, t0);
            vec![b; cfg.n_samples]
        }
    };
    let mut out = BasepointSamples {
        z: Vec::with_capacity(draws.len()),
        failed: Vec::new(),
    };
    for (i, d) in draws.into_iter().enumerate() {
        match d {
            Ok(z) => out.z.push(z),
            Err(PathError::OutOfRange(_)) => out.failed.push(i),
            Err(e) => return Err(e.into()),
        }
    }
    if out.failed.len() * 100 > cfg.n_samples {
        return Err(McError::WindowExhausted {
            failed: out.failed.len(),
            n: cfg.n_samples,
            k_min: cfg.k_min,
            k_max: cfg.k_max,
        });
    }
    Ok(out)
}

/// Running maximum `s = M(x)`, its first location `a <= x` and the first
/// passage `b > x` above `s`, for standard Brownian motion started at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmFunctionals {
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSamples {
    pub samples: Vec<BmFunctionals>,
    /// Samples whose overshoot search reached the step cap and was finished
    /// with the exact first-passage law.
    pub tail_completed: usize,
}

/// Crossing chances below this are treated as zero.
const NEGLIGIBLE: f64 = 1e-16;

/// Maximum over one step of a Brownian bridge from `w0` to `w1` over time
/// `h`, given it exceeds `level >= max(w0, w1)` when `u` is below the
/// exceedance probability. `u` in `(0, 1]`.
fn bridge_max(w0: f64, w1: f64, h: f64, u: f64) -> f64 {
    let d = w1 - w0;
    0.5 * (w0 + w1 + (d * d - 2.0 * h * u.ln()).sqrt())
}

fn unit_open<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn one_oracle_sample<R: Rng>(x: f64, m: usize, rng: &mut R) -> (BmFunctionals, bool) {
    let h = x / m as f64;
    let sd = h.sqrt();
    let (mut w, mut s, mut a) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        let w1 = w + sd * z;
        // the step's bridge exceeds s with probability p
        let p = if w1 >= s {
            1.0
        } else {
            (-2.0 * (s - w) * (s - w1) / h).exp()
        };
        if p > NEGLIGIBLE {
            let u = unit_open(rng);
            if u <= p {
                s = bridge_max(w, w1, h, u);
                a = (i as f64 + 0.5) * h;
            }
        }
        w = w1;
    }

    // first passage above s after x
    let mut cur = x;
    for _ in 0..m {
        let z: f64 = rng.sample(StandardNormal);
        let w1 = w + sd * z;
        let crossed = w1 >= s || {
            let p = (-2.0 * (s - w) * (s - w1) / h).exp();
            p > NEGLIGIBLE && unit_open(rng) <= p
        };
        if crossed {
            return (BmFunctionals { s, a, b: cur + 0.5 * h }, false);
        }
        w = w1;
        cur += h;
    }
    // remaining passage time of the distance s - w: (s - w)^2 / Z^2
    let z = loop {
        let z: f64 = rng.sample(StandardNormal);
        if z != 0.0 {
            break z;
        }
    };
    let gap = s - w;
    (
        BmFunctionals {
            s,
            a,
            b: cur + gap * gap / (z * z),
        },
        true,
    )
}

/// Simulates `n` Brownian paths on `[0, x]` with mesh close to `step`
/// (adjusted so that `x` is a grid point). Step maxima are drawn from the
/// exact bridge law, so `s` carries no discretization bias; `a` and `b` are
/// located to within half a step.
pub fn bm_functionals_oracle(x: f64, step: f64, n: usize, seed: RngSeed) -> Result<OracleSamples, McError> {
    if !(x > 0.0 && x.is_finite() && step > 0.0 && step < x) {
        return Err(McError::InvalidConfig(format!(
            "need 0 < step < x, got step {step}, x {x}"
        )));
    }
    let m = (x / step).round().max(1.0) as usize;
    let runs: Vec<(BmFunctionals, bool)> = (0..n as u64)
        .into_par_iter()
        .map(|i| one_oracle_sample(x, m, &mut seed.with_stream(i).stream()))
        .collect();
    Ok(OracleSamples {
        tail_completed: runs.iter().filter(|r| r.1).count(),
        samples: runs.into_iter().map(|r| r.0).collect(),
    })
}

/// Left-closed bins `[e_i, e_(i+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    /// Total number of samples offered, including out-of-range ones.
    pub n: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Result<Self, McError> {
        if edges.len() < 2 || edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(McError::InvalidEdges(edges.len()));
        }
        let bins = edges.len() - 1;
        Ok(Self {
            edges,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
            n: 0,
        })
    }

    pub fn add(&mut self, v: f64) {
        self.n += 1;
        if v < self.edges[0] {
            self.underflow += 1;
            return;
        }
        let i = self.edges.partition_point(|&e| e <= v);
        if i >= self.edges.len() {
            self.overflow += 1;
        } else {
            self.counts[i - 1] += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<(), McError> {
        if self.edges != other.edges {
            return Err(McError::InvalidEdges(other.edges.len()));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.n += other.n;
        Ok(())
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    /// `count / (n * width)` per bin.
    pub fn densities(&self) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| {
                if self.n == 0 {
                    0.0
                } else {
                    self.counts[i] as f64 / (self.n as f64 * self.width(i))
                }
            })
            .collect()
    }

    /// CSV with header `left,right,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["left", "right", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([fmt17(self.edges[i]), fmt17(self.edges[i + 1]), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn histogram(samples: &[f64], edges: &[f64]) -> Result<Histogram, McError> {
    let empty = Histogram::new(edges.to_vec())?;
    Ok(samples
        .par_chunks(4096)
        .map(|chunk| {
            let mut h = empty.clone();
            chunk.iter().for_each(|&v| h.add(v));
            h
        })
        .reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b).expect("same edges");
                a
            },
        ))
}

/// `sum_i |count_i / (n w_i) - mean density over bin i| * w_i`.
pub fn l1_distance(h: &Histogram, curve: &DensityCurve) -> f64 {
    h.densities()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let w = h.width(i);
            let mean = curve.integrate_between(h.edges[i], h.edges[i + 1]) / w;
            (d - mean).abs() * w
        })
        .sum()
}

/// `sum_i w_i sqrt(f_i / (n w_i))`: the size of the Monte Carlo noise in
/// [`l1_distance`] for a histogram sampled from the curve itself.
pub fn l1_noise_budget(h: &Histogram, curve: &DensityCurve) -> f64 {
    let n = h.n.max(1) as f64;
    (0..h.counts.len())
        .map(|i| (curve.integrate_between(h.edges[i], h.edges[i + 1]).max(0.0) / n).sqrt())
        .sum()
}

/// `sup |F_n - F|` over the sample points (both one-sided limits of the
/// empirical CDF are checked).
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Piecewise linear CDF through a `(z, F)` table; 0 before, last value after.
pub fn tabulated_cdf(table: &[(f64, f64)]) -> impl Fn(f64) -> f64 + '_ {
    move |z| {
        let n = table.len();
        if n == 0 || z < table[0].0 {
            return 0.0;
        }
        let i = table.partition_point(|p| p.0 <= z);
        if i >= n {
            return table[n - 1].1;
        }
        let ((z0, f0), (z1, f1)) = (table[i - 1], table[i]);
        f0 + (f1 - f0) * (z - z0) / (z1 - z0)
    }
}

/// 1% critical value of the one-sample KS statistic, asymptotic form.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ig_analytics::{running_max_cdf, running_max_density};

    #[test]
    fn histogram_conventions() {
        let h = histogram(&[0.5, 1.5, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        let h = histogram(&[3.0; 10], &[2.0, 4.0]).unwrap();
        assert_eq!(h.counts, vec![10]);
        let h = histogram(&[], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(h.counts, vec![0, 0]);
        assert_eq!(h.n, 0);
        let h = histogram(&[-1.0, 2.0, 5.0, 0.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!((h.underflow, h.overflow, h.counts.clone()), (1, 2, vec![1, 0]));
        assert!(h.counts.iter().sum::<u64>() <= h.n);
        assert!(histogram(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn histogram_merge_is_order_free() {
        let edges = [0.0, 0.3, 0.9, 2.0];
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.618).fract() * 2.5 - 0.2).collect();
        let whole = histogram(&xs, &edges).unwrap();
        let mut a = histogram(&xs[500..], &edges).unwrap();
        a.merge(&histogram(&xs[..500], &edges).unwrap()).unwrap();
        assert_eq!(a, whole);
    }

    fn box_curve(lo: f64, hi: f64) -> DensityCurve {
        let eps = 1e-12;
        DensityCurve {
            x: 0.0,
            t: 1.0,
            z: vec![lo - 1.0, lo - eps, lo, hi, hi + eps, hi + 1.0],
            f: vec![0.0, 0.0, 1.0 / (hi - lo), 1.0 / (hi - lo), 0.0, 0.0],
            err: vec![0.0; 6],
            converged: vec![true; 6],
            mass: 1.0,
        }
    }

    #[test]
    fn l1_extremes() {
        let h = histogram(&[0.5; 100], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let d = l1_distance(&h, &box_curve(2.0, 3.0));
        assert!((d - 2.0).abs() < 1e-9, "{d}");
        let xs: Vec<f64> = (0..100).map(|i| 2.0 + i as f64 / 100.0).collect();
        let h = histogram(&xs, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(l1_distance(&h, &box_curve(2.0, 3.0)) < 1e-9);
    }

    #[test]
    fn ks_cases() {
        let uniform = |z: f64| z.clamp(0.0, 1.0);
        assert_eq!(ks_distance(&[-1.0, -2.0], uniform), 1.0);
        assert_eq!(ks_distance(&[0.5], uniform), 0.5);
        let seed = RngSeed::new(1, 0);
        let mut rng = seed.stream();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_distance(&xs, uniform) < ks_critical_1pct(xs.len()));
        let table = [(0.0, 0.0), (1.0, 1.0)];
        let f = tabulated_cdf(&table);
        assert_eq!((f(-1.0), f(0.25), f(2.0)), (0.0, 0.25, 1.0));
    }

    #[test]
    fn l1_self_consistency() {
        // sample a smooth density by inversion and compare with its curve
        let curve = DensityCurve {
            x: 0.0,
            t: 1.0,
            z: (0..=400).map(|i| i as f64 / 400.0).collect(),
            f: (0..=400).map(|i| 2.0 * i as f64 / 400.0).collect(),
            err: vec![0.0; 401],
            converged: vec![true; 401],
            mass: 1.0,
        };
        let mut rng = RngSeed::new(4, 0).stream();
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>().sqrt()).collect();
        let edges: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let h = histogram(&xs, &edges).unwrap();
        let d = l1_distance(&h, &curve);
        assert!(d < 2.0 * l1_noise_budget(&h, &curve), "{d}");
    }

    fn cfg(n: usize, n_max: u32, k_min: i64, k_max: i64) -> McConfig {
        McConfig {
            n_samples: n,
            n_max,
            k_min,
            k_max,
            seed: RngSeed::new(2024, 0),
            bins: 60,
        }
    }

    #[test]
    fn pure_drift_basepoints() {
        let c = cfg(10, 12, -1 << 12, 16 << 12);
        let r = sample_basepoints(&BasepointModel::PureDrift { drift: 1.0 }, 8.0, 1.0, &c).unwrap();
        assert_eq!(r.z.len(), 10);
        assert!(r.z.iter().all(|z| (z - 7.0).abs() <= 2f64.powi(-12)));
        let fine = sample_basepoints(
            &BasepointModel::PureDrift { drift: 1.0 },
            8.0,
            1.0,
            &McConfig {
                n_max: 13,
                k_min: -2 << 13,
                k_max: 16 << 13,
                ..c
            },
        )
        .unwrap();
        for (a, b) in r.z.iter().zip(&fine.z) {
            assert!((a - b).abs() <= 2f64.powi(-12));
        }
    }

    #[test]
    fn streamed_basepoints_match_full_paths() {
        let c = cfg(40, 8, -64 << 8, 64 << 8);
        let spec = ProcessSpec::StableHalf;
        let r = sample_basepoints(&BasepointModel::Levy(spec), 2.0, 0.5, &c).unwrap();
        let mut j = 0;
        for i in 0..c.n_samples as u64 {
            if r.failed.contains(&(i as usize)) {
                continue;
            }
            let full =
                crate::levy_paths::build_two_sided_path(&spec, 8, c.k_min, c.k_max, c.seed.with_stream(i)).unwrap();
            assert_eq!(basepoint(&full, 2.0, 0.5).unwrap().to_bits(), r.z[j].to_bits());
            j += 1;
        }
    }

    #[test]
    fn stable_half_basepoints_stay_below_level() {
        let c = cfg(300, 10, -64 << 10, 64 << 10);
        let r = sample_basepoints(&BasepointModel::Levy(ProcessSpec::StableHalf), 8.0, 1.0, &c).unwrap();
        assert!(r.z.iter().all(|&z| z <= 8.0));
        let r = sample_basepoints(&BasepointModel::Levy(ProcessSpec::StableHalf), -1.0, 1.0, &c).unwrap();
        assert!(r.z.iter().all(|&z| z <= -1.0));
    }

    #[test]
    fn window_exhaustion_is_reported() {
        let c = cfg(20, 6, -4, 8);
        let e = sample_basepoints(&BasepointModel::Levy(ProcessSpec::StableHalf), 8.0, 1.0, &c).unwrap_err();
        assert!(matches!(e, McError::WindowExhausted { .. }), "{e}");
        assert!(e.to_string().contains("widen"));
    }

    #[test]
    fn determinism_across_thread_counts() {
        let c = cfg(64, 8, -64 << 8, 64 << 8);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_basepoints(&BasepointModel::Levy(ProcessSpec::StableHalf), 3.0, 1.0, &c).unwrap())
        };
        assert_eq!(run(1), run(4));
        let o = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bm_functionals_oracle(1.0, 1e-2, 200, RngSeed::new(5, 0)).unwrap())
        };
        assert_eq!(o(1), o(3));
    }

    #[test]
    fn oracle_basic_relations() {
        let r = bm_functionals_oracle(1.0, 1e-3, 2000, RngSeed::new(6, 0)).unwrap();
        for f in &r.samples {
            assert!(f.s >= 0.0);
            assert!(f.a <= 1.0 && f.a >= 0.0);
            assert!(f.b >= 1.0);
        }
    }

    #[test]
    fn oracle_running_max_is_half_normal() {
        let n = 100_000;
        let r = bm_functionals_oracle(1.0, 1e-3, n, RngSeed::new(7, 0)).unwrap();
        let s: Vec<f64> = r.samples.iter().map(|f| f.s).collect();
        let edges: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25).collect();
        let h = histogram(&s, &edges).unwrap();
        for i in 0..h.counts.len() {
            let p = running_max_cdf(1.0, edges[i + 1]) - running_max_cdf(1.0, edges[i]);
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (h.counts[i] as f64 - mean).abs() <= 3.5 * sd.max(1.0),
                "bin {i}: {} vs {mean}",
                h.counts[i]
            );
        }
        assert!(ks_distance(&s, |v| running_max_cdf(1.0, v)) < ks_critical_1pct(n));
        assert!((running_max_density(1.0, 1.0) - 0.48394).abs() < 1e-5);
    }
}
