//! Reproducible Monte Carlo experiments.
//!
//! Every experiment is a pure function of its parameters and seed. Replicas
//! run on the rayon pool, each with its own counter-based random stream, and
//! their results are reduced in replica order; the worker count never
//! changes a report.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::halfplane::HalfPlanePoint;
use crate::iter_integrals::compute_table;
use crate::rng;
use crate::schemes::{
    drift_flow, euler_step, nv_step_with, reference_solve_converged, taylor_step, taylor_words, Convention,
    SchemeConfig, TaylorTruncation,
};
use crate::stats::{log_log_fit, LinearFit, MeanEstimate, NormEstimate};
use crate::vf_algebra::{compose, MultiIndex};

/// Default relative tolerance of the doubling check on reference solutions.
pub const DEFAULT_REFERENCE_TOL: f64 = 1e-6;

/// Rows plus metadata; `rows` is written as CSV, the rest as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport<R> {
    pub name: String,
    pub rows: Vec<R>,
    pub fit: Option<LinearFit>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl<R: Serialize> ExperimentReport<R> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Sidecar document; `runtime_seconds` is the only field that varies
    /// between identical runs.
    pub fn sidecar(&self, runtime_seconds: f64) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "config": self.config,
            "seed": self.seed,
            "fit": self.fit,
            "rows": self.rows.len(),
            "warnings": self.warnings,
            "runtime_seconds": runtime_seconds,
        })
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
    pub fn write_files(&self, dir: &Path, runtime_seconds: f64) -> Result<()> {
        self.write_csv(std::fs::File::create(dir.join(format!("{}.csv", self.name)))?)?;
        let json = serde_json::to_string_pretty(&self.sidecar(runtime_seconds)).expect("report serialises");
        std::fs::write(dir.join(format!("{}.json", self.name)), json + "\n")?;
        Ok(())
    }
}

fn salted(seed: u64, salt: u64, replicas: usize) -> impl IndexedParallelIterator<Item = u64> {
    (0..replicas)
        .into_par_iter()
        .map(move |k| rng::replica_seed(seed, salt, k as u64))
}

fn check_replicas(replicas: usize, minimum: usize) -> Result<()> {
    if replicas < minimum {
        return Err(Error::invalid(
            "replicas",
            format!("need at least {minimum} replicas, got {replicas}"),
        ));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// one-step Taylor error against epsilon

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub eps_list: Vec<f64>,
    pub delta: f64,
    pub r: usize,
    pub kappa: f64,
    pub replicas: usize,
    pub seed: u64,
    pub truncation: TaylorTruncation,
    /// Initial reference grid; doubled until converged.
    pub base_substeps: usize,
    pub max_substeps: usize,
    pub reference_tol: f64,
}

impl ScalingParams {
    pub fn new(eps_list: Vec<f64>, delta: f64, r: usize, kappa: f64, replicas: usize, seed: u64) -> Self {
        ScalingParams {
            eps_list,
            delta,
            r,
            kappa,
            replicas,
            seed,
            truncation: TaylorTruncation::ByLength,
            base_substeps: 16,
            max_substeps: 1 << 20,
            reference_tol: DEFAULT_REFERENCE_TOL,
        }
    }
}

/// Dyadic grid `2^-3, ..., 2^-7`.
pub fn default_eps_grid() -> Vec<f64> {
    (3..=7).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub t: f64,
    pub l2_error: f64,
    pub stderr: f64,
    pub error_over_eps: f64,
    pub reference_converged: f64,
    pub mean_substeps: f64,
}

/// `|| Z_t - E^r(Z_0, X_{0,t}) ||_{L2}` at `t = ε^{2+δ}` from `Z_0 = εi`, in
/// the unit-noise convention, for each `ε`. The fit is the log-log slope of
/// the error against `ε`.
///
/// All `ε` share replica seeds: the driving paths are Brownian rescalings of
/// one another at the base resolution, which correlates the errors across
/// the grid and steadies the fitted slope.
pub fn epsilon_scaling(params: &ScalingParams) -> Result<ExperimentReport<ScalingRow>> {
    check_delta(params.delta)?;
    check_replicas(params.replicas, 1)?;
    if params.eps_list.is_empty() {
        return Err(Error::invalid("eps_list", "at least one epsilon is required"));
    }
    if params.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::invalid("eps_list", "every epsilon must lie in (0, 1)"));
    }
    if params.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("eps_list", "epsilons must be strictly decreasing"));
    }
    if params.base_substeps == 0 {
        return Err(Error::invalid("base_substeps", "must be positive"));
    }
    let mut cfg = SchemeConfig::new(params.kappa, Convention::UnitNoise)?;
    cfg.taylor_truncation = params.truncation;
    let table_len = taylor_words(params.r, params.truncation)
        .iter()
        .map(MultiIndex::len)
        .max()
        .unwrap_or(0);

    let mut warnings = Vec::new();
    if params.replicas < 100 {
        warnings.push(format!(
            "only {} replicas; the fitted slope is unstable",
            params.replicas
        ));
    }
    let mut rows = Vec::with_capacity(params.eps_list.len());
    for &eps in &params.eps_list {
        let t = eps.powf(2.0 + params.delta);
        let z0 = HalfPlanePoint::on_imaginary_axis(eps)?;
        let samples: Vec<(f64, bool, usize)> = salted(params.seed, 0, params.replicas)
            .map(|seed| -> Result<(f64, bool, usize)> {
                let mut path = BrownianPath::sample_uniform(t, params.base_substeps, seed)?;
                let reference = reference_solve_converged(
                    z0,
                    &mut path,
                    t,
                    params.base_substeps,
                    params.max_substeps,
                    params.reference_tol,
                    &cfg,
                )?;
                let table = compute_table(&path, t, table_len)?;
                let approx = taylor_step(z0.as_complex(), &table, params.r, &cfg)?;
                Ok((
                    (reference.value.as_complex() - approx).norm_sqr(),
                    reference.converged,
                    reference.substeps,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let squares: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let norm = NormEstimate::from_squares(&squares);
        let converged = samples.iter().filter(|s| s.1).count() as f64 / samples.len() as f64;
        if converged < 1.0 {
            warnings.push(format!(
                "eps = {eps}: {:.1}% of references hit the substep cap",
                100.0 * (1.0 - converged)
            ));
        }
        let mean_substeps = samples.iter().map(|s| s.2 as f64).sum::<f64>() / samples.len() as f64;
        rows.push(ScalingRow {
            eps,
            t,
            l2_error: norm.norm,
            stderr: norm.stderr,
            error_over_eps: norm.norm / eps,
            reference_converged: converged,
            mean_substeps,
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let fit = if errors.iter().all(|&e| e > 0.0) {
        log_log_fit(&eps, &errors)
    } else {
        None
    };
    Ok(ExperimentReport {
        name: "scaling".into(),
        rows,
        fit,
        config: serde_json::to_value(params).expect("params serialise"),
        seed: params.seed,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// growth of individual Taylor terms beyond the ε² horizon

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceParams {
    pub eps: f64,
    pub delta: f64,
    pub words: Vec<MultiIndex>,
    pub kappa: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Linear pieces per path on `[0, ε^{2-δ}]`.
    pub resolution: usize,
    /// Octaves on each side of `eps` used to fit the exponent.
    pub octaves: u32,
}

impl DivergenceParams {
    pub fn new(eps: f64, delta: f64, words: Vec<MultiIndex>, replicas: usize, seed: u64) -> Self {
        DivergenceParams {
            eps,
            delta,
            words,
            kappa: 2.0,
            replicas,
            seed,
            resolution: 64,
            octaves: 2,
        }
    }
}

/// Every word of length `1..=max_len`.
pub fn words_up_to(max_len: usize) -> Vec<MultiIndex> {
    (1..=max_len).flat_map(MultiIndex::all_of_length).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub word: String,
    pub degree: f64,
    /// `||V_I Id(εi) X^I_{0, ε^{2-δ}}||_{L2}` at the probed `ε`.
    pub estimate: f64,
    pub stderr: f64,
    /// `ln(estimate) / ln(ε)`; carries the `O(1)` prefactor of the term.
    pub raw_exponent: f64,
    /// Log-log slope of the estimate over the `ε` octaves around the probe.
    pub fitted_exponent: f64,
    pub fitted_r_squared: f64,
    /// `1 - δ deg(I)`.
    pub predicted_exponent: f64,
}

impl DivergenceRow {
    pub fn exponent_error(&self) -> f64 {
        (self.fitted_exponent - self.predicted_exponent).abs()
    }
}

/// L2 size of each Taylor term over the horizon `ε^{2-δ}` from `Z_0 = εi`.
///
/// Besides the probed `ε`, the same quantity is estimated at
/// `ε 2^j` for `|j| <= octaves` with independent replicas, and the empirical
/// exponent is the log-log slope over that grid. Words whose composition
/// vanishes are skipped and listed in the warnings.
pub fn divergence_probe(params: &DivergenceParams) -> Result<ExperimentReport<DivergenceRow>> {
    check_delta(params.delta)?;
    check_replicas(params.replicas, 2)?;
    if !(params.eps > 0.0 && params.eps < 1.0) {
        return Err(Error::invalid(
            "eps",
            format!("eps must lie in (0, 1), got {}", params.eps),
        ));
    }
    if params.resolution == 0 {
        return Err(Error::invalid("resolution", "must be positive"));
    }
    let cfg = SchemeConfig::new(params.kappa, Convention::UnitNoise)?;
    let mut warnings = Vec::new();
    let mut live = Vec::new();
    for word in &params.words {
        let term = compose(word);
        if term.is_zero() {
            warnings.push(format!("word {word}: vector-field composition is zero, skipped"));
        } else {
            live.push((word.clone(), term));
        }
    }
    let max_len = live.iter().map(|(w, _)| w.len()).max().unwrap_or(0);
    let octaves = params.octaves as i32;
    let eps_grid: Vec<f64> = (-octaves..=octaves).rev().map(|j| params.eps * 2f64.powi(j)).collect();
    if eps_grid.iter().any(|&e| e >= 1.0) {
        return Err(Error::invalid("eps", "eps * 2^octaves must stay below 1"));
    }

    // norms[g][w]: estimate for grid point g and live word w
    let mut norms: Vec<Vec<NormEstimate>> = Vec::with_capacity(eps_grid.len());
    for (g, &eps) in eps_grid.iter().enumerate() {
        let z = Complex64::new(0.0, eps);
        let coefficients = live
            .iter()
            .map(|(w, t)| t.eval_scaled(z, cfg.drift_coefficient(), cfg.noise_coefficient(), w.noise_count()))
            .collect::<Result<Vec<_>>>()?;
        let horizon = eps.powf(2.0 - params.delta);
        let samples: Vec<Vec<f64>> = salted(params.seed, g as u64, params.replicas)
            .map(|seed| -> Result<Vec<f64>> {
                let path = BrownianPath::sample_uniform(horizon, params.resolution, seed)?;
                let table = compute_table(&path, horizon, max_len)?;
                Ok(live
                    .iter()
                    .zip(&coefficients)
                    .map(|((w, _), c)| (c * table.entry(w).expect("length checked")).norm_sqr())
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        norms.push(
            (0..live.len())
                .map(|i| NormEstimate::from_squares(&samples.iter().map(|s| s[i]).collect::<Vec<_>>()))
                .collect(),
        );
    }
    let probe = octaves as usize;
    let rows = live
        .iter()
        .enumerate()
        .map(|(i, (word, _))| {
            let at_probe = norms[probe][i];
            let ys: Vec<f64> = norms.iter().map(|n| n[i].norm).collect();
            let fit = log_log_fit(&eps_grid, &ys);
            DivergenceRow {
                word: word.to_string(),
                degree: word.degree_f64(),
                estimate: at_probe.norm,
                stderr: at_probe.stderr,
                raw_exponent: at_probe.norm.ln() / params.eps.ln(),
                fitted_exponent: fit.map_or(f64::NAN, |f| f.slope),
                fitted_r_squared: fit.map_or(f64::NAN, |f| f.r_squared),
                predicted_exponent: 1.0 - params.delta * word.degree_f64(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        name: "divergence".into(),
        rows,
        fit: None,
        config: serde_json::to_value(params).expect("params serialise"),
        seed: params.seed,
        warnings,
    })
}

/// Geometric mean of the estimates per degree, in increasing degree.
pub fn magnitude_by_degree(rows: &[DivergenceRow]) -> Vec<(f64, f64)> {
    let mut degrees: Vec<f64> = rows.iter().map(|r| r.degree).collect();
    degrees.sort_by(f64::total_cmp);
    degrees.dedup();
    degrees
        .into_iter()
        .map(|d| {
            let logs: Vec<f64> = rows.iter().filter(|r| r.degree == d).map(|r| r.estimate.ln()).collect();
            (d, (logs.iter().sum::<f64>() / logs.len() as f64).exp())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// second moment of the NV scheme

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    pub kappa: f64,
    pub z0: Complex64,
    pub horizon: f64,
    pub n_steps: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub mean_re: f64,
    pub mean_im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub target_re: f64,
    pub target_im: f64,
    /// Largest `|mean - target| / stderr` over the two components.
    pub deviation: f64,
}

/// Sample mean of `Z̃²_{t_k}` for the NV scheme of `dZ = -2/Z dt + sqrt(κ) dB`
/// on a uniform grid, against the exact `z0² + (κ - 4) t_k`.
pub fn moment_preservation(params: &MomentParams) -> Result<ExperimentReport<MomentRow>> {
    check_replicas(params.replicas, 1000)?;
    if params.n_steps == 0 {
        return Err(Error::invalid("n_steps", "at least one step is required"));
    }
    let z0 = HalfPlanePoint::try_from_complex(params.z0)?;
    let cfg = SchemeConfig::new(params.kappa, Convention::ScaledNoise)?;
    let n = params.n_steps;
    let squares: Vec<Vec<Complex64>> = salted(params.seed, 0, params.replicas)
        .map(|seed| -> Result<Vec<Complex64>> {
            let path = BrownianPath::sample_uniform(params.horizon, n, seed)?;
            let (times, bs) = (path.times(), path.values());
            let mut z = z0;
            let mut out = Vec::with_capacity(n + 1);
            out.push(z.as_complex() * z.as_complex());
            for k in 0..n {
                z = nv_step_with(z, times[k + 1] - times[k], bs[k + 1] - bs[k], &cfg);
                out.push(z.as_complex() * z.as_complex());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = BrownianPath::sample_uniform(params.horizon, n, 0)?;
    let rows = (0..=n)
        .map(|k| {
            let re: Vec<f64> = squares.iter().map(|s| s[k].re).collect();
            let im: Vec<f64> = squares.iter().map(|s| s[k].im).collect();
            let (m_re, m_im) = (MeanEstimate::from_samples(&re), MeanEstimate::from_samples(&im));
            let t = grid.times()[k];
            let target = params.z0 * params.z0 + (params.kappa - 4.0) * t;
            MomentRow {
                t,
                mean_re: m_re.mean,
                mean_im: m_im.mean,
                stderr_re: m_re.stderr,
                stderr_im: m_im.stderr,
                target_re: target.re,
                target_im: target.im,
                deviation: m_re.z_score(target.re).abs().max(m_im.z_score(target.im).abs()),
            }
        })
        .collect();
    Ok(ExperimentReport {
        name: "moments".into(),
        rows,
        fit: None,
        config: serde_json::to_value(params).expect("params serialise"),
        seed: params.seed,
        warnings: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// side-by-side one-step errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
pub enum Driver {
    #[default]
    Brownian,
    /// Identically zero noise; the reference is the exact drift flow.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonParams {
    pub kappa: f64,
    pub eps: f64,
    pub horizons: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub driver: Driver,
    pub base_substeps: usize,
    pub max_substeps: usize,
    pub reference_tol: f64,
}

impl ComparisonParams {
    pub fn new(kappa: f64, eps: f64, horizons: Vec<f64>, replicas: usize, seed: u64) -> Self {
        ComparisonParams {
            kappa,
            eps,
            horizons,
            replicas,
            seed,
            driver: Driver::Brownian,
            base_substeps: 16,
            max_substeps: 1 << 20,
            reference_tol: DEFAULT_REFERENCE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub horizon: f64,
    pub euler: f64,
    pub euler_stderr: f64,
    pub taylor1: f64,
    pub taylor1_stderr: f64,
    pub taylor2: f64,
    pub taylor2_stderr: f64,
    pub taylor3: f64,
    pub taylor3_stderr: f64,
    pub nv: f64,
    pub nv_stderr: f64,
}

/// L2 one-step errors of Euler, Taylor (r = 1, 2, 3) and a single NV step
/// from `Z_0 = εi` in the unit-noise convention, against the reference.
pub fn scheme_comparison(params: &ComparisonParams) -> Result<ExperimentReport<ComparisonRow>> {
    check_replicas(params.replicas, 1)?;
    if !(params.eps > 0.0) {
        return Err(Error::invalid("eps", "eps must be positive"));
    }
    if params.horizons.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("horizons", "horizons must be positive"));
    }
    let cfg = SchemeConfig::new(params.kappa, Convention::UnitNoise)?;
    let z0 = HalfPlanePoint::on_imaginary_axis(params.eps)?;
    let mut rows = Vec::with_capacity(params.horizons.len());
    for &h in &params.horizons {
        let samples: Vec<[f64; 5]> = salted(params.seed, 0, params.replicas)
            .map(|seed| -> Result<[f64; 5]> {
                let (reference, path) = match params.driver {
                    Driver::Brownian => {
                        let mut path = BrownianPath::sample_uniform(h, params.base_substeps, seed)?;
                        let r = reference_solve_converged(
                            z0,
                            &mut path,
                            h,
                            params.base_substeps,
                            params.max_substeps,
                            params.reference_tol,
                            &cfg,
                        )?;
                        (r.value.as_complex(), path)
                    }
                    Driver::Zero => (
                        drift_flow(z0.as_complex(), h, cfg.drift_coefficient()),
                        BrownianPath::zero(h, 1)?,
                    ),
                };
                let table = compute_table(&path, h, 3)?;
                let db = path.value_at(h)?;
                let z = z0.as_complex();
                let err = |approx: Complex64| (reference - approx).norm_sqr();
                Ok([
                    err(euler_step(z, h, db, &cfg)?),
                    err(taylor_step(z, &table, 1, &cfg)?),
                    err(taylor_step(z, &table, 2, &cfg)?),
                    err(taylor_step(z, &table, 3, &cfg)?),
                    err(nv_step_with(z0, h, db, &cfg).as_complex()),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        let column = |i: usize| NormEstimate::from_squares(&samples.iter().map(|s| s[i]).collect::<Vec<_>>());
        let (e, t1, t2, t3, nv) = (column(0), column(1), column(2), column(3), column(4));
        rows.push(ComparisonRow {
            horizon: h,
            euler: e.norm,
            euler_stderr: e.stderr,
            taylor1: t1.norm,
            taylor1_stderr: t1.stderr,
            taylor2: t2.norm,
            taylor2_stderr: t2.stderr,
            taylor3: t3.norm,
            taylor3_stderr: t3.stderr,
            nv: nv.norm,
            nv_stderr: nv.stderr,
        });
    }
    Ok(ExperimentReport {
        name: "compare".into(),
        rows,
        fit: None,
        config: serde_json::to_value(params).expect("params serialise"),
        seed: params.seed,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_kappa_four_has_constant_target() {
        let p = MomentParams {
            kappa: 4.0,
            z0: Complex64::new(0.3, 1.0),
            horizon: 1.0,
            n_steps: 8,
            replicas: 1000,
            seed: 1,
        };
        let report = moment_preservation(&p).unwrap();
        assert_eq!(report.rows.len(), 9);
        let z2 = p.z0 * p.z0;
        for row in &report.rows {
            assert_eq!((row.target_re, row.target_im), (z2.re, z2.im));
        }
        assert_eq!(report.rows[0].deviation, 0.0);
    }

    #[test]
    fn moments_target_at_horizon() {
        let p = MomentParams {
            kappa: 2.0,
            z0: Complex64::new(0.0, 1.0),
            horizon: 1.0,
            n_steps: 4,
            replicas: 1000,
            seed: 2,
        };
        let report = moment_preservation(&p).unwrap();
        let last = report.rows.last().unwrap();
        assert_eq!((last.t, last.target_re, last.target_im), (1.0, -3.0, 0.0));
        assert!(moment_preservation(&MomentParams { replicas: 999, ..p }).is_err());
    }

    #[test]
    fn moment_stderr_shrinks_like_root_replicas() {
        let base = MomentParams {
            kappa: 2.0,
            z0: Complex64::new(0.0, 1.0),
            horizon: 1.0,
            n_steps: 2,
            replicas: 4000,
            seed: 3,
        };
        let small = moment_preservation(&base).unwrap();
        let large = moment_preservation(&MomentParams {
            replicas: 16_000,
            ..base
        })
        .unwrap();
        let ratio = small.rows[2].stderr_re / large.rows[2].stderr_re;
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn scaling_validation() {
        let ok = ScalingParams::new(vec![0.25, 0.125], 0.5, 1, 2.0, 10, 0);
        assert!(epsilon_scaling(&ScalingParams {
            delta: 0.0,
            ..ok.clone()
        })
        .is_err());
        assert!(epsilon_scaling(&ScalingParams {
            eps_list: vec![0.125, 0.25],
            ..ok.clone()
        })
        .is_err());
        assert!(epsilon_scaling(&ScalingParams {
            eps_list: vec![1.5],
            ..ok.clone()
        })
        .is_err());
        let report = epsilon_scaling(&ok).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.fit.is_none(), "two abscissae cannot be fitted");
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn zero_terms_are_skipped() {
        let words = vec![MultiIndex::from_digits(&[0, 1]), MultiIndex::from_digits(&[0])];
        let p = DivergenceParams::new(0.05, 0.5, words, 50, 0);
        let report = divergence_probe(&p).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.warnings.len(), 1);
        let row = &report.rows[0];
        // deterministic term: a ε^{1-δ} exactly
        assert!((row.fitted_exponent - 0.5).abs() < 1e-9);
        assert!((row.raw_exponent - 0.5).abs() < 1e-9);
        assert!(row.stderr < 1e-12 * row.estimate);
    }

    #[test]
    fn zero_noise_comparison() {
        let mut p = ComparisonParams::new(2.0, 0.1, vec![1e-3, 1e-2], 4, 0);
        p.driver = Driver::Zero;
        let report = scheme_comparison(&p).unwrap();
        for row in &report.rows {
            assert!(row.nv <= 1e-15 * 0.1, "nv error {}", row.nv);
            assert!(row.euler > 0.0);
        }
    }

    #[test]
    fn csv_header_follows_row_fields() {
        let p = MomentParams {
            kappa: 4.0,
            z0: Complex64::new(0.0, 1.0),
            horizon: 1.0,
            n_steps: 1,
            replicas: 1000,
            seed: 0,
        };
        let mut buf = Vec::new();
        moment_preservation(&p).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,mean_re,mean_im,stderr_re,stderr_im,target_re,target_im,deviation\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
