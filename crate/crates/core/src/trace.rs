//! Discretised SLE traces from compositions of NV slit maps.
//!
//! On a partition `0 = t_0 < ... < t_N = T` the trace point at `t_k` is
//!
//! ```text
//! z_{t_k} = f_0 ∘ f_1 ∘ ... ∘ f_{k-1}(0)
//! f_i(z)  = sqrt_h((sqrt_h(z^2 - 2h_i) + sqrt(κ) (B(t_i) - B(t_{i+1})))^2 - 2h_i)
//! ```
//!
//! The partition starts uniform and is refined adaptively: whenever two
//! consecutive points are at least `tolerance` apart the offending interval
//! is bisected, its Brownian midpoint drawn from the bridge, and the sweep
//! resumes at that interval. Points left of a refined interval never change,
//! so they are kept. Candidate points are evaluated speculatively in
//! batches on the rayon pool; the batch schedule does not depend on the
//! number of workers, so neither do the results or the statistics.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::{uniform_time, BrownianPath};
use crate::error::{Error, Result};
use crate::halfplane::sqrt_h;

/// Largest speculative batch in the adaptive sweep.
const MAX_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub horizon: f64,
    pub kappa: f64,
    pub n_init: usize,
    pub tolerance: f64,
    pub max_depth: u32,
    pub apply_shift: bool,
}

impl TraceParams {
    pub fn new(horizon: f64, kappa: f64, tolerance: f64) -> Self {
        TraceParams {
            horizon,
            kappa,
            n_init: 100,
            tolerance,
            max_depth: 40,
            apply_shift: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(
                "T",
                format!("horizon must be positive, got {}", self.horizon),
            ));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(
                "kappa",
                format!("kappa must be nonnegative, got {}", self.kappa),
            ));
        }
        if self.n_init == 0 {
            return Err(Error::invalid("n_init", "at least one initial interval is required"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid(
                "tolerance",
                format!("tolerance must be positive, got {}", self.tolerance),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub z: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceStats {
    /// Deepest bisection level of any interval of the final partition.
    pub refinement_depth_max: u32,
    /// Slit-map evaluations spent on the accepted points: `Σ_k k`.
    pub map_evaluations: u64,
    /// Evaluations spent on rejected or speculative candidates.
    pub discarded_map_evaluations: u64,
    pub refinements: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceResult {
    pub points: Vec<TracePoint>,
    pub partition: Vec<f64>,
    pub tolerance: f64,
    pub kappa: f64,
    pub shift_applied: bool,
    pub stats: TraceStats,
}

impl TraceResult {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest `|z_{k+1} - z_k|`.
    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].z - w[0].z).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "re", "im"])?;
        for p in &self.points {
            w.write_record([p.t.to_string(), p.z.re.to_string(), p.z.im.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One-line JSON summary of the run.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "points": self.points.len(),
            "kappa": self.kappa,
            "tolerance": self.tolerance,
            "shift_applied": self.shift_applied,
            "max_gap": self.max_gap(),
            "stats": self.stats,
        })
    }
}

/// `f(z) = sqrt_h((sqrt_h(z^2 - 2h) + shift)^2 - 2h)` with
/// `shift = sqrt(κ) dB`, `dB` the reversed increment `B(t_i) - B(t_{i+1})`.
#[inline]
pub fn slit_map(z: Complex64, h: f64, db: f64, kappa: f64) -> Complex64 {
    slit(z, 2.0 * h, kappa.sqrt() * db)
}

#[inline(always)]
fn slit(z: Complex64, two_h: f64, shift: f64) -> Complex64 {
    let w = sqrt_h(z * z - two_h) + shift;
    sqrt_h(w * w - two_h)
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    two_h: f64,
    shift: f64,
    depth: u32,
}

/// `f_0 ∘ ... ∘ f_{k-1}(0)`.
#[inline]
fn compose_from_origin(intervals: &[Interval]) -> Complex64 {
    intervals
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |z, iv| slit(z, iv.two_h, iv.shift))
}

struct Builder<'a> {
    path: &'a mut BrownianPath,
    sqrt_kappa: f64,
    times: Vec<f64>,
    intervals: Vec<Interval>,
}

impl Builder<'_> {
    fn interval(&self, start: f64, end: f64, depth: u32) -> Result<Interval> {
        Ok(Interval {
            two_h: 2.0 * (end - start),
            shift: self.sqrt_kappa * self.path.increment(end, start)?,
            depth,
        })
    }

    /// Bridge sample at the midpoint of partition interval `k`.
    fn bisect(&mut self, k: usize) -> Result<()> {
        let (start, end) = (self.times[k], self.times[k + 1]);
        let mid = 0.5 * (start + end);
        if !(mid > start && mid < end) {
            return Err(Error::MaxDepthExceeded {
                max_depth: self.intervals[k].depth,
                start,
                end,
            });
        }
        if self.path.index_of(mid).is_none() {
            match (self.path.index_of(start), self.path.index_of(end)) {
                (Some(i), Some(j)) if j == i + 1 => {
                    self.path.insert_midpoint(i)?;
                }
                _ => {
                    self.path.refine_to(mid)?;
                }
            }
        }
        let depth = self.intervals[k].depth + 1;
        let left = self.interval(start, mid, depth)?;
        let right = self.interval(mid, end, depth)?;
        self.times.insert(k + 1, mid);
        self.intervals[k] = left;
        self.intervals.insert(k + 1, right);
        Ok(())
    }
}

/// Adaptive trace on `[0, T]`. The path is refined in place with bridge
/// samples wherever the partition is bisected.
pub fn build_trace(path: &mut BrownianPath, params: &TraceParams) -> Result<TraceResult> {
    params.validate()?;
    let n = params.n_init;
    let times: Vec<f64> = (0..=n).map(|k| uniform_time(params.horizon, k, n)).collect();
    refine_from(path, params, times, vec![0; n])
}

/// Continues the refinement of an existing trace's partition under
/// `params` (usually a smaller tolerance). The new partition contains the
/// old one; bisection depths are inferred from the interval lengths
/// relative to the uniform `n_init` grid.
pub fn refine_trace(path: &mut BrownianPath, previous: &TraceResult, params: &TraceParams) -> Result<TraceResult> {
    params.validate()?;
    let times = previous.partition.clone();
    if times.len() < 2 || times[0] != 0.0 || times[times.len() - 1] != params.horizon {
        return Err(Error::invalid("previous", "partition does not span [0, T]"));
    }
    let base = params.horizon / params.n_init as f64;
    let depths = times
        .windows(2)
        .map(|w| (base / (w[1] - w[0])).log2().round().max(0.0) as u32)
        .collect();
    refine_from(path, params, times, depths)
}

fn refine_from(
    path: &mut BrownianPath,
    params: &TraceParams,
    times: Vec<f64>,
    depths: Vec<u32>,
) -> Result<TraceResult> {
    if path.horizon() < params.horizon * (1.0 - 8.0 * f64::EPSILON) {
        return Err(Error::HorizonTooShort {
            requested: params.horizon,
            available: path.horizon(),
        });
    }
    let mut builder = Builder {
        path,
        sqrt_kappa: params.kappa.sqrt(),
        times,
        intervals: Vec::with_capacity(depths.len()),
    };
    for (k, depth) in depths.into_iter().enumerate() {
        let iv = builder.interval(builder.times[k], builder.times[k + 1], depth)?;
        builder.intervals.push(iv);
    }

    let mut stats = TraceStats::default();
    let mut points = vec![Complex64::new(0.0, 0.0)];
    let mut batch = 1usize;
    // points[..=k] are final; interval k leads from points[k] to the next one
    let mut k = 0usize;
    while k < builder.intervals.len() {
        let end = (k + batch).min(builder.intervals.len());
        let intervals = &builder.intervals;
        let candidates: Vec<Complex64> = (k + 1..=end)
            .into_par_iter()
            .map(|j| compose_from_origin(&intervals[..j]))
            .collect();
        let mut accepted = 0;
        let mut previous = points[k];
        for z in &candidates {
            if (z - previous).norm() >= params.tolerance {
                break;
            }
            previous = *z;
            accepted += 1;
        }
        for (offset, z) in candidates.iter().enumerate() {
            let cost = (k + 1 + offset) as u64;
            if offset < accepted {
                stats.map_evaluations += cost;
                points.push(*z);
            } else {
                stats.discarded_map_evaluations += cost;
            }
        }
        k += accepted;
        if accepted == candidates.len() {
            batch = (batch * 2).min(MAX_BATCH);
            continue;
        }
        batch = 1;
        let depth = builder.intervals[k].depth;
        if depth >= params.max_depth {
            return Err(Error::MaxDepthExceeded {
                max_depth: params.max_depth,
                start: builder.times[k],
                end: builder.times[k + 1],
            });
        }
        builder.bisect(k)?;
        stats.refinements += 1;
    }
    stats.refinement_depth_max = builder.intervals.iter().map(|iv| iv.depth).max().unwrap_or(0);

    let shift = if params.apply_shift {
        params.kappa.sqrt() * builder.path.value_at(builder.times[builder.times.len() - 1])?
    } else {
        0.0
    };
    let points = builder
        .times
        .iter()
        .zip(points)
        .map(|(&t, z)| TracePoint { t, z: z + shift })
        .collect();
    Ok(TraceResult {
        points,
        partition: builder.times,
        tolerance: params.tolerance,
        kappa: params.kappa,
        shift_applied: params.apply_shift,
        stats,
    })
}

/// Re-evaluates every point of a finished partition independently, in
/// parallel. Gives the same values as the adaptive sweep.
pub fn evaluate_partition(path: &BrownianPath, partition: &[f64], kappa: f64) -> Result<Vec<Complex64>> {
    let sqrt_kappa = kappa.sqrt();
    let intervals = partition
        .windows(2)
        .map(|w| {
            Ok(Interval {
                two_h: 2.0 * (w[1] - w[0]),
                shift: sqrt_kappa * path.increment(w[1], w[0])?,
                depth: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=intervals.len())
        .into_par_iter()
        .map(|k| compose_from_origin(&intervals[..k]))
        .collect())
}

/// Renders the trace as an SVG 1.1 polyline above a drawn real axis.
///
/// The drawing keeps the aspect ratio and always includes the origin and
/// the real axis; the y axis points up.
pub fn render_svg(trace: &TraceResult, width: u32, height: u32) -> Result<String> {
    if trace.points.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("width", "image size must be positive"));
    }
    let (mut x_min, mut x_max, mut y_max) = (0.0f64, 0.0f64, 0.0f64);
    for p in &trace.points {
        x_min = x_min.min(p.z.re);
        x_max = x_max.max(p.z.re);
        y_max = y_max.max(p.z.im);
    }
    let span_x = (x_max - x_min).max(f64::MIN_POSITIVE);
    let span_y = y_max.max(f64::MIN_POSITIVE);
    let margin = 0.05 * f64::from(width.min(height));
    let scale = ((f64::from(width) - 2.0 * margin) / span_x).min((f64::from(height) - 2.0 * margin) / span_y);
    let x_offset = 0.5 * (f64::from(width) - scale * (x_min + x_max));
    let baseline = f64::from(height) - margin;
    let map = |z: Complex64| (x_offset + scale * z.re, baseline - scale * z.im);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="0" y1="{baseline:.3}" x2="{width}" y2="{baseline:.3}" stroke="#888888" stroke-width="1"/>"##
    );
    svg.push_str(r#"<polyline fill="none" stroke="black" stroke-width="0.6" points=""#);
    for (i, p) in trace.points.iter().enumerate() {
        let (x, y) = map(p.z);
        if i > 0 {
            svg.push(' ');
        }
        let _ = write!(svg, "{x:.3},{y:.3}");
    }
    svg.push_str("\"/>\n</svg>\n");
    Ok(svg)
}
