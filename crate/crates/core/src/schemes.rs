//! One-step maps for the backward Loewner SDE.
//!
//! Two normalisations of the equation are supported:
//!
//! * [`Convention::UnitNoise`]: `dZ = -(2/κ)/Z dt + dB`,
//! * [`Convention::ScaledNoise`]: `dZ = -2/Z dt + sqrt(κ) dB`.
//!
//! If `Z` solves the scaled form then `Z / sqrt(κ)` solves the unit form on
//! the same time axis. Both are instances of `dZ = -c/Z dt + σ dB`, whose
//! split flows are solved in closed form:
//!
//! ```text
//! exp(t V0) z = sqrt_h(z^2 - 2 c t)        exp(u V1) z = z + σ u
//! ```
//!
//! The Ninomiya-Victoir step is the Strang composition
//! `exp(h/2 V0) ∘ exp(dB V1) ∘ exp(h/2 V0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::brownian::{uniform_time, BrownianPath};
use crate::error::{Error, Result};
use crate::halfplane::{sqrt_h, HalfPlanePoint};
use crate::iter_integrals::{IntegralConvention, IteratedIntegralTable};
use crate::vf_algebra::{compose, MultiIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Convention {
    /// `dZ = -(2/κ)/Z dt + dB`.
    #[default]
    UnitNoise,
    /// `dZ = -2/Z dt + sqrt(κ) dB`.
    ScaledNoise,
}

/// Which words enter an `r`-truncated Taylor step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum TaylorTruncation {
    /// All words of length `<= r`.
    #[default]
    ByLength,
    /// All words with `m + n/2 <= r`.
    ByDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kappa: f64,
    pub convention: Convention,
    pub taylor_truncation: TaylorTruncation,
    pub integral_convention: IntegralConvention,
}

impl SchemeConfig {
    pub fn new(kappa: f64, convention: Convention) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("kappa", format!("kappa must be positive, got {kappa}")));
        }
        Ok(SchemeConfig {
            kappa,
            convention,
            taylor_truncation: TaylorTruncation::ByLength,
            integral_convention: IntegralConvention::Stratonovich,
        })
    }

    pub fn with_truncation(mut self, truncation: TaylorTruncation) -> Self {
        self.taylor_truncation = truncation;
        self
    }

    /// `c` in the drift `-c/z`.
    pub fn drift_coefficient(&self) -> f64 {
        match self.convention {
            Convention::UnitNoise => 2.0 / self.kappa,
            Convention::ScaledNoise => 2.0,
        }
    }

    /// `σ` in the noise term `σ dB`.
    pub fn noise_coefficient(&self) -> f64 {
        match self.convention {
            Convention::UnitNoise => 1.0,
            Convention::ScaledNoise => self.kappa.sqrt(),
        }
    }

    pub fn drift(&self, z: Complex64) -> Result<Complex64> {
        if z == Complex64::new(0.0, 0.0) {
            return Err(Error::Pole);
        }
        Ok(-self.drift_coefficient() / z)
    }
}

/// `exp(t V0) z = sqrt_h(z^2 - 2 c t)` for the drift field `-c/z`.
#[inline]
pub fn drift_flow(z: Complex64, t: f64, c: f64) -> Complex64 {
    sqrt_h(z * z - 2.0 * c * t)
}

/// Drift flow of `-2/z`: `sqrt_h(z^2 - 4t)`.
pub fn flow_drift(z: HalfPlanePoint, t: f64) -> HalfPlanePoint {
    HalfPlanePoint::from_complex_unchecked(drift_flow(z.as_complex(), t, 2.0))
}

/// Noise flow `z + sqrt(κ) u`.
pub fn flow_noise(z: HalfPlanePoint, u: f64, kappa: f64) -> HalfPlanePoint {
    z.shift(kappa.sqrt() * u)
}

/// Closed form of the split step for `dZ = -c/Z dt + σ dB`:
/// `sqrt_h((sqrt_h(z^2 - c h) + σ dB)^2 - c h)`.
#[inline]
pub fn split_step(z: Complex64, h: f64, db: f64, c: f64, sigma: f64) -> Complex64 {
    let ch = c * h;
    let w = sqrt_h(z * z - ch) + sigma * db;
    sqrt_h(w * w - ch)
}

/// Ninomiya-Victoir step of `dZ = -2/Z dt + sqrt(κ) dB`.
pub fn nv_step(z: HalfPlanePoint, h: f64, db: f64, kappa: f64) -> HalfPlanePoint {
    HalfPlanePoint::from_complex_unchecked(split_step(z.as_complex(), h, db, 2.0, kappa.sqrt()))
}

/// Ninomiya-Victoir step in the configured convention.
pub fn nv_step_with(z: HalfPlanePoint, h: f64, db: f64, cfg: &SchemeConfig) -> HalfPlanePoint {
    HalfPlanePoint::from_complex_unchecked(split_step(
        z.as_complex(),
        h,
        db,
        cfg.drift_coefficient(),
        cfg.noise_coefficient(),
    ))
}

/// Euler-Maruyama: `z + drift(z) h + σ dB`.
pub fn euler_step(z: Complex64, h: f64, db: f64, cfg: &SchemeConfig) -> Result<Complex64> {
    Ok(z + cfg.drift(z)? * h + cfg.noise_coefficient() * db)
}

/// Milstein correction `½ σ σ' (dB² - h)`; the diffusion field is constant,
/// so `σ' = 0` and the scheme reduces to Euler-Maruyama.
pub fn milstein_correction(h: f64, db: f64, cfg: &SchemeConfig) -> f64 {
    let sigma_prime = 0.0;
    0.5 * cfg.noise_coefficient() * sigma_prime * (db * db - h)
}

pub fn milstein_step(z: Complex64, h: f64, db: f64, cfg: &SchemeConfig) -> Result<Complex64> {
    Ok(euler_step(z, h, db, cfg)? + milstein_correction(h, db, cfg))
}

/// Words entering the `r`-truncated Taylor approximant.
pub fn taylor_words(r: usize, truncation: TaylorTruncation) -> Vec<MultiIndex> {
    let max_len = match truncation {
        TaylorTruncation::ByLength => r,
        TaylorTruncation::ByDegree => 2 * r,
    };
    (0..=max_len)
        .flat_map(MultiIndex::all_of_length)
        .filter(|w| truncation == TaylorTruncation::ByLength || w.degree_f64() <= r as f64)
        .collect()
}

/// `Σ_I V_{i1}⋯V_{ik} Id(z) X^I` over the admissible words. The empty word
/// contributes `z` itself, so the result is the approximant, not the
/// increment.
pub fn taylor_step(z: Complex64, table: &IteratedIntegralTable, r: usize, cfg: &SchemeConfig) -> Result<Complex64> {
    let words = taylor_words(r, cfg.taylor_truncation);
    let needed = words.iter().map(MultiIndex::len).max().unwrap_or(0);
    if needed > table.max_len() {
        return Err(Error::CapExceeded {
            requested: needed,
            cap: table.max_len(),
        });
    }
    if table.convention() != cfg.integral_convention {
        return Err(Error::invalid(
            "table",
            format!(
                "table convention {:?} does not match configured {:?}",
                table.convention(),
                cfg.integral_convention
            ),
        ));
    }
    let (c, sigma) = (cfg.drift_coefficient(), cfg.noise_coefficient());
    let mut sum = Complex64::new(0.0, 0.0);
    for word in &words {
        let term = compose(word);
        if term.is_zero() {
            continue;
        }
        let coefficient = term.eval_scaled(z, c, sigma, word.noise_count())?;
        sum += coefficient * table.entry(word).expect("length checked");
    }
    Ok(sum)
}

/// NV stepping of `z0` over the uniform grid `t k / substeps` of `[0, t]`.
/// Every grid time must be a sampled time of `path`.
pub fn reference_solve(
    z0: HalfPlanePoint,
    path: &BrownianPath,
    t: f64,
    substeps: usize,
    cfg: &SchemeConfig,
) -> Result<HalfPlanePoint> {
    if substeps == 0 {
        return Err(Error::invalid("substeps", "at least one substep is required"));
    }
    if t > path.horizon() * (1.0 + 8.0 * f64::EPSILON) {
        return Err(Error::HorizonTooShort {
            requested: t,
            available: path.horizon(),
        });
    }
    let (c, sigma) = (cfg.drift_coefficient(), cfg.noise_coefficient());
    let mut z = z0.as_complex();
    let mut prev_t = 0.0;
    let mut prev_b = path.value_at_index(0);
    for k in 1..=substeps {
        let tk = uniform_time(t, k, substeps);
        let index = path.index_of(tk).ok_or_else(|| Error::InsufficientRefinement {
            needed: substeps + 1,
            found: path.index_of(t).map_or(0, |i| i + 1),
            horizon: t,
        })?;
        let b = path.value_at_index(index);
        z = split_step(z, tk - prev_t, b - prev_b, c, sigma);
        prev_t = tk;
        prev_b = b;
    }
    Ok(HalfPlanePoint::from_complex_unchecked(z))
}

/// A reference value together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergedReference {
    pub value: HalfPlanePoint,
    pub substeps: usize,
    /// `|z_{2n} - z_n| / |z_{2n}|` at the last doubling.
    pub relative_change: f64,
    pub converged: bool,
}

/// Runs [`reference_solve`] with doubling substep counts, bisecting the
/// path with bridge samples as needed, until two successive values agree to
/// `rel_tol` or `max_substeps` is reached.
///
/// `path` must be sampled on the uniform `substeps` grid of `[0, t]` and
/// nowhere else inside it; the path ends up refined to the finest grid used.
pub fn reference_solve_converged(
    z0: HalfPlanePoint,
    path: &mut BrownianPath,
    t: f64,
    substeps: usize,
    max_substeps: usize,
    rel_tol: f64,
    cfg: &SchemeConfig,
) -> Result<ConvergedReference> {
    let mut n = substeps;
    let mut value = reference_solve(z0, path, t, n, cfg)?;
    loop {
        if 2 * n > max_substeps {
            return Ok(ConvergedReference {
                value,
                substeps: n,
                relative_change: f64::NAN,
                converged: false,
            });
        }
        path.refine_all_before(t)?;
        n *= 2;
        let next = reference_solve(z0, path, t, n, cfg)?;
        let change = (next.as_complex() - value.as_complex()).norm() / next.modulus().max(f64::MIN_POSITIVE);
        value = next;
        if change <= rel_tol {
            return Ok(ConvergedReference {
                value,
                substeps: n,
                relative_change: change,
                converged: true,
            });
        }
        if 2 * n > max_substeps {
            return Ok(ConvergedReference {
                value,
                substeps: n,
                relative_change: change,
                converged: false,
            });
        }
    }
}
