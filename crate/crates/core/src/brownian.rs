//! Sampled Brownian paths with dyadic bridge refinement.
//!
//! A [`BrownianPath`] stores `B(t_i)` on a strictly increasing grid starting
//! at `(0, 0)`. Refinement inserts midpoints drawn from the Brownian bridge
//! between neighbouring samples; the variate used for a midpoint is keyed by
//! the midpoint time itself, so the same seed always produces the same
//! refined path no matter in which order intervals were bisected.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    times: Vec<f64>,
    values: Vec<f64>,
    seed: u64,
    frozen: bool,
}

impl BrownianPath {
    /// Brownian motion on the uniform grid `t_k = T * k / n`.
    pub fn sample_uniform(horizon: f64, n: usize, seed: u64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        if n == 0 {
            return Err(Error::invalid("n", "at least one step is required"));
        }
        let scale = (horizon / n as f64).sqrt();
        let mut times = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        times.push(0.0);
        values.push(0.0);
        let mut b = 0.0;
        for k in 1..=n {
            b += scale * rng::standard_normal(seed, domain::BASE_INCREMENT, k as u64);
            times.push(uniform_time(horizon, k, n));
            values.push(b);
        }
        // the last grid point is exactly the horizon
        *times.last_mut().unwrap() = horizon;
        Ok(BrownianPath {
            times,
            values,
            seed,
            frozen: false,
        })
    }

    /// Path with prescribed samples; `seed` drives any later refinement.
    pub fn from_samples(times: Vec<f64>, values: Vec<f64>, seed: u64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("values", "times and values differ in length"));
        }
        if times.first() != Some(&0.0) || values.first() != Some(&0.0) {
            return Err(Error::invalid("times", "a path must start at (0, 0)"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times", "sample times must be strictly increasing"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "samples must be finite"));
        }
        Ok(BrownianPath {
            times,
            values,
            seed,
            frozen: false,
        })
    }

    /// Identically zero driver on a uniform grid.
    pub fn zero(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::invalid("n", "zero path needs n >= 1 and T > 0"));
        }
        let times: Vec<f64> = (0..=n).map(|k| uniform_time(horizon, k, n)).collect();
        Self::from_samples(times, vec![0.0; n + 1], 0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("path always holds (0, 0)")
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Snapshot semantics: a frozen path rejects every further refinement.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// Index of a sampled time. Matches within a few ulps of the horizon so
    /// that grids computed along different arithmetic routes still agree.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 8.0 * f64::EPSILON * self.horizon().max(t.abs());
        let i = self.times.partition_point(|&s| s < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    /// `B(t_index)`.
    pub fn value_at_index(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// `B(t)` for a sampled time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.index_of(t)
            .map(|i| self.values[i])
            .ok_or(Error::UnsampledTime { time: t })
    }

    /// `B(t) - B(s)`; `s > t` gives the reversed increment.
    pub fn increment(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.value_at(t)? - self.value_at(s)?)
    }

    /// Inserts the bridge midpoint of `[t_i, t_{i+1}]` and returns its index.
    ///
    /// The new value is `(B(t_i) + B(t_{i+1}))/2 + ξ sqrt(h/4)`; samples
    /// already present are left untouched.
    pub fn insert_midpoint(&mut self, i: usize) -> Result<usize> {
        if self.frozen {
            return Err(Error::FrozenPath);
        }
        if i + 1 >= self.times.len() {
            return Err(Error::InvalidIndex {
                index: i,
                len: self.times.len(),
            });
        }
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let mid = 0.5 * (t0 + t1);
        if !(mid > t0 && mid < t1) {
            return Err(Error::invalid(
                "i",
                format!("interval [{t0}, {t1}] is too short to bisect"),
            ));
        }
        let h = t1 - t0;
        let xi = rng::standard_normal(self.seed, domain::BRIDGE_MIDPOINT, mid.to_bits());
        let value = 0.5 * (self.values[i] + self.values[i + 1]) + xi * (0.25 * h).sqrt();
        self.times.insert(i + 1, mid);
        self.values.insert(i + 1, value);
        Ok(i + 1)
    }

    /// Makes `t` a sampled time by repeated bisection of the bracketing
    /// interval. Succeeds when `t` is a dyadic point of the bracket.
    pub fn refine_to(&mut self, t: f64) -> Result<usize> {
        const MAX_BISECTIONS: usize = 60;
        if !(t >= 0.0 && t <= self.horizon()) {
            return Err(Error::UnsampledTime { time: t });
        }
        for _ in 0..MAX_BISECTIONS {
            if let Some(i) = self.index_of(t) {
                return Ok(i);
            }
            let i = self.times.partition_point(|&s| s < t) - 1;
            self.insert_midpoint(i)?;
        }
        self.index_of(t).ok_or(Error::UnsampledTime { time: t })
    }

    /// Bisects every interval lying in `[0, t]` in a single pass. Produces the
    /// same samples as calling [`insert_midpoint`](Self::insert_midpoint) on
    /// each of those intervals.
    pub fn refine_all_before(&mut self, t: f64) -> Result<()> {
        if self.frozen {
            return Err(Error::FrozenPath);
        }
        let end = self.index_of(t).ok_or(Error::UnsampledTime { time: t })?;
        let mut times = Vec::with_capacity(self.times.len() + end);
        let mut values = Vec::with_capacity(self.times.len() + end);
        for i in 0..end {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let mid = 0.5 * (t0 + t1);
            if !(mid > t0 && mid < t1) {
                return Err(Error::invalid(
                    "t",
                    format!("interval [{t0}, {t1}] is too short to bisect"),
                ));
            }
            let xi = rng::standard_normal(self.seed, domain::BRIDGE_MIDPOINT, mid.to_bits());
            times.push(t0);
            values.push(self.values[i]);
            times.push(mid);
            values.push(0.5 * (self.values[i] + self.values[i + 1]) + xi * (0.25 * (t1 - t0)).sqrt());
        }
        times.extend_from_slice(&self.times[end..]);
        values.extend_from_slice(&self.values[end..]);
        self.times = times;
        self.values = values;
        Ok(())
    }

    /// Brownian scaling: times `t / c`, values `B(t) / sqrt(c)`.
    pub fn rescale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("c", format!("scale must be positive, got {c}")));
        }
        if c == 1.0 {
            return Ok(self.clone());
        }
        let root = c.sqrt();
        Ok(BrownianPath {
            times: self.times.iter().map(|t| t / c).collect(),
            values: self.values.iter().map(|b| b / root).collect(),
            seed: self.seed,
            frozen: self.frozen,
        })
    }

    /// Sub-path on `[0, t]`, `t` a sampled time.
    pub fn truncate(&self, t: f64) -> Result<Self> {
        let end = self.index_of(t).ok_or(Error::UnsampledTime { time: t })?;
        Ok(BrownianPath {
            times: self.times[..=end].to_vec(),
            values: self.values[..=end].to_vec(),
            seed: self.seed,
            frozen: self.frozen,
        })
    }

    /// Writes `t,B` rows at full precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "B"])?;
        for (t, b) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "B" {
            return Err(Error::Parse(format!(
                "expected header `t,B`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            times.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        Self::from_samples(times, values, seed)
    }
}

/// `T * (k / n)`: dyadic refinements of a grid reproduce its times bitwise.
pub fn uniform_time(horizon: f64, k: usize, n: usize) -> f64 {
    horizon * (k as f64 / n as f64)
}
