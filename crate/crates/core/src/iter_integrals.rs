//! Iterated integrals of the space-time path `X = (t, B)`.
//!
//! Integrals are taken over the piecewise-linear interpolation of the
//! sampled path (the geometric, i.e. Stratonovich, lift). Each linear piece
//! with increment `v = (dt, dB)` has signature `exp(v)`, and the running
//! table is updated with Chen's relation
//!
//! ```text
//! S(w)  <-  sum_{w = u v'}  S(u) * v'^{⊗} / |v'|!
//! ```
//!
//! which is exact for the lift, level by level, in `O(2^r r)` per sample.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::NormEstimate;
use crate::vf_algebra::{Letter, MultiIndex, MAX_LEVEL};

/// Stochastic integral convention of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum IntegralConvention {
    /// Geometric integrals of the piecewise-linear lift.
    #[default]
    Stratonovich,
    /// Stratonovich table with the level-2 Itô correction on `(1,1)`:
    /// `B_t^2/2 - t/2`. Longer words are left in Stratonovich form.
    Ito2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratedIntegralTable {
    horizon: f64,
    max_len: usize,
    resolution: usize,
    convention: IntegralConvention,
    /// Indexed by [`MultiIndex::flat_index`].
    values: Vec<f64>,
}

impl IteratedIntegralTable {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Number of linear pieces the table was integrated over.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn convention(&self) -> IntegralConvention {
        self.convention
    }

    pub fn entry(&self, word: &MultiIndex) -> Option<f64> {
        (word.len() <= self.max_len).then(|| self.values[word.flat_index()])
    }

    /// `(word, value)` for all words, shortest first.
    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        (0..=self.max_len).flat_map(MultiIndex::all_of_length).map(move |w| {
            let v = self.values[w.flat_index()];
            (w, v)
        })
    }

    /// Table consisting of a single linear piece `(h, dB)`; the signature of
    /// one step of a scheme that only sees the increment.
    pub fn from_increment(h: f64, db: f64, r: usize) -> Result<Self> {
        check_level(r)?;
        let mut values = vec![0.0; (1 << (r + 1)) - 1];
        values[0] = 1.0;
        chen_update(&mut values, r, h, db);
        Ok(IteratedIntegralTable {
            horizon: h,
            max_len: r,
            resolution: 1,
            convention: IntegralConvention::Stratonovich,
            values,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["word", "value"])?;
        for (word, v) in self.iter() {
            w.write_record([word.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_level(r: usize) -> Result<()> {
    if r > MAX_LEVEL {
        return Err(Error::CapExceeded {
            requested: r,
            cap: MAX_LEVEL,
        });
    }
    Ok(())
}

fn factorial_reciprocals(r: usize) -> Vec<f64> {
    let mut inv = vec![1.0; r + 1];
    for k in 1..=r {
        inv[k] = inv[k - 1] / k as f64;
    }
    inv
}

/// Multiplies the running signature by `exp((dt, dB))`, longest words first
/// so that prefixes are still the old values when read.
fn chen_update(values: &mut [f64], r: usize, dt: f64, db: f64) {
    let inv_fact = factorial_reciprocals(r);
    let mut pow_t = vec![1.0; r + 1];
    let mut pow_b = vec![1.0; r + 1];
    for k in 1..=r {
        pow_t[k] = pow_t[k - 1] * dt;
        pow_b[k] = pow_b[k - 1] * db;
    }
    for len in (1..=r).rev() {
        let base = (1usize << len) - 1;
        for bits in 0..1usize << len {
            let mut acc = values[base + bits];
            for prefix_len in 0..len {
                let suffix_len = len - prefix_len;
                let prefix_bits = bits >> suffix_len;
                let suffix_bits = bits & ((1 << suffix_len) - 1);
                let ones = suffix_bits.count_ones() as usize;
                let prefix = values[(1 << prefix_len) - 1 + prefix_bits];
                acc += prefix * pow_t[suffix_len - ones] * pow_b[ones] * inv_fact[suffix_len];
            }
            values[base + bits] = acc;
        }
    }
}

/// All iterated integrals of words of length `<= r` over `[0, t]`, Stratonovich.
pub fn compute_table(path: &BrownianPath, t: f64, r: usize) -> Result<IteratedIntegralTable> {
    compute_table_with(path, t, r, IntegralConvention::Stratonovich)
}

pub fn compute_table_with(
    path: &BrownianPath,
    t: f64,
    r: usize,
    convention: IntegralConvention,
) -> Result<IteratedIntegralTable> {
    check_level(r)?;
    if t > path.horizon() * (1.0 + 8.0 * f64::EPSILON) {
        return Err(Error::HorizonTooShort {
            requested: t,
            available: path.horizon(),
        });
    }
    let end = path.index_of(t).ok_or(Error::UnsampledTime { time: t })?;
    if end == 0 {
        return Err(Error::InsufficientRefinement {
            needed: 2,
            found: 1,
            horizon: t,
        });
    }
    let mut values = vec![0.0; (1 << (r + 1)) - 1];
    values[0] = 1.0;
    let (times, bs) = (path.times(), path.values());
    for k in 0..end {
        chen_update(&mut values, r, times[k + 1] - times[k], bs[k + 1] - bs[k]);
    }
    if convention == IntegralConvention::Ito2 && r >= 2 {
        values[MultiIndex::new(vec![Letter::Noise, Letter::Noise]).flat_index()] -= 0.5 * times[end];
    }
    Ok(IteratedIntegralTable {
        horizon: times[end],
        max_len: r,
        resolution: end,
        convention,
        values,
    })
}

/// Monte Carlo estimate of `||X^I_{0,t}||_{L2}` and `||X^I_{0,1}||_{L2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    pub at_t: NormEstimate,
    pub at_one: NormEstimate,
    pub t: f64,
}

impl ScalingEstimate {
    pub fn ratio(&self) -> f64 {
        self.at_t.norm / self.at_one.norm
    }

    /// `ln(||X_{0,t}|| / ||X_{0,1}||) / ln t`, an estimate of `deg(I)`.
    pub fn exponent(&self) -> f64 {
        self.ratio().ln() / self.t.ln()
    }
}

/// Both norms come from the same unit-horizon paths; the horizon-`t` path is
/// the Brownian rescaling of the unit one.
pub fn l2_scaling_estimate(
    word: &MultiIndex,
    t: f64,
    replicas: usize,
    resolution: usize,
    seed: u64,
) -> Result<ScalingEstimate> {
    if replicas < 100 {
        return Err(Error::invalid(
            "replicas",
            format!("need at least 100 replicas, got {replicas}"),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t", format!("horizon must be positive, got {t}")));
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution", "resolution must be positive"));
    }
    check_level(word.len())?;
    let squares: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let unit = BrownianPath::sample_uniform(1.0, resolution, rng::replica_seed(seed, 0, k))?;
            let x1 = compute_table(&unit, 1.0, word.len())?
                .entry(word)
                .expect("length checked");
            let scaled = unit.rescale(1.0 / t)?;
            let xt = compute_table(&scaled, scaled.horizon(), word.len())?
                .entry(word)
                .expect("length checked");
            Ok((xt * xt, x1 * x1))
        })
        .collect::<Result<Vec<_>>>()?;
    let (st, s1): (Vec<f64>, Vec<f64>) = squares.into_iter().unzip();
    Ok(ScalingEstimate {
        at_t: NormEstimate::from_squares(&st),
        at_one: NormEstimate::from_squares(&s1),
        t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(d: &[u8]) -> MultiIndex {
        MultiIndex::from_digits(d)
    }

    #[test]
    fn basic_entries() {
        let p = BrownianPath::sample_uniform(2.0, 64, 3).unwrap();
        let tab = compute_table(&p, 1.5, 3).unwrap();
        let b = p.value_at(1.5).unwrap();
        assert_eq!(tab.entry(&MultiIndex::empty()), Some(1.0));
        assert!((tab.entry(&w(&[0])).unwrap() - 1.5).abs() < 1e-14);
        assert!((tab.entry(&w(&[1])).unwrap() - b).abs() < 1e-14);
        assert!((tab.entry(&w(&[0, 0])).unwrap() - 1.125).abs() < 1e-12);
        assert!((tab.entry(&w(&[1, 1])).unwrap() - b * b / 2.0).abs() < 1e-12);
        assert!((tab.entry(&w(&[0, 0, 0])).unwrap() - 1.5f64.powi(3) / 6.0).abs() < 1e-12);
        assert_eq!(tab.entry(&w(&[0, 0, 0, 0])), None);
        assert_eq!(tab.resolution(), 48);
    }

    #[test]
    fn shuffle_identity() {
        let p = BrownianPath::sample_uniform(1.0, 100, 8).unwrap();
        let tab = compute_table(&p, 1.0, 2).unwrap();
        let lhs = tab.entry(&w(&[0])).unwrap() * tab.entry(&w(&[1])).unwrap();
        let rhs = tab.entry(&w(&[0, 1])).unwrap() + tab.entry(&w(&[1, 0])).unwrap();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn single_piece_is_exponential() {
        let tab = IteratedIntegralTable::from_increment(0.3, -0.7, 3).unwrap();
        // exp of (h, b): word entries are h^m b^n / k!
        assert!((tab.entry(&w(&[1, 0, 1])).unwrap() - 0.3 * 0.49 / 6.0).abs() < 1e-15);
        assert!((tab.entry(&w(&[0, 1])).unwrap() - 0.3 * -0.7 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ito_correction_only_touches_double_noise() {
        let p = BrownianPath::sample_uniform(1.0, 32, 2).unwrap();
        let s = compute_table(&p, 1.0, 3).unwrap();
        let i = compute_table_with(&p, 1.0, 3, IntegralConvention::Ito2).unwrap();
        for (word, v) in s.iter() {
            let expected = if word == w(&[1, 1]) { v - 0.5 } else { v };
            assert_eq!(i.entry(&word).unwrap(), expected, "{word}");
        }
    }

    #[test]
    fn errors() {
        let p = BrownianPath::sample_uniform(1.0, 4, 0).unwrap();
        assert!(matches!(compute_table(&p, 0.3, 2), Err(Error::UnsampledTime { .. })));
        assert!(matches!(compute_table(&p, 2.0, 2), Err(Error::HorizonTooShort { .. })));
        assert!(matches!(compute_table(&p, 1.0, 40), Err(Error::CapExceeded { .. })));
        assert!(matches!(
            compute_table(&p, 0.0, 2),
            Err(Error::InsufficientRefinement { .. })
        ));
        assert!(l2_scaling_estimate(&w(&[1]), 0.5, 10, 8, 0).is_err());
    }

    #[test]
    fn refinement_cauchy_criterion() {
        // doubling resolution by bridge refinement converges for every
        // length <= 3 word on a fixed path
        let mut p = BrownianPath::sample_uniform(1.0, 256, 13).unwrap();
        let mut previous = compute_table(&p, 1.0, 3).unwrap();
        let mut last_change = f64::INFINITY;
        for _ in 0..4 {
            let n = p.len() - 1;
            for i in (0..n).rev() {
                p.insert_midpoint(i).unwrap();
            }
            let next = compute_table(&p, 1.0, 3).unwrap();
            last_change = previous
                .iter()
                .zip(next.iter())
                .map(|((_, a), (_, b))| (a - b).abs())
                .fold(0.0, f64::max);
            previous = next;
        }
        assert!(last_change < 0.05, "change after refinement {last_change}");
    }

    #[test]
    fn deterministic_time_words_are_exact_under_scaling() {
        let est = l2_scaling_estimate(&w(&[0]), 0.25, 100, 4, 1).unwrap();
        assert!((est.ratio() - 0.25).abs() < 1e-14);
        assert_eq!(est.at_t.stderr, 0.0);
    }

    #[test]
    fn noise_word_ratio_is_root_t() {
        let est = l2_scaling_estimate(&w(&[1]), 0.25, 400, 8, 3).unwrap();
        assert!((est.ratio() - 0.5).abs() < 1e-12);
        assert!((est.at_one.norm - 1.0).abs() < 4.0 * est.at_one.stderr);
    }
}
