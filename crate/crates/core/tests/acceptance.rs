//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sle_nv::brownian::BrownianPath;
use sle_nv::experiments::{
    default_eps_grid, divergence_probe, epsilon_scaling, magnitude_by_degree, moment_preservation, words_up_to,
    DivergenceParams, MomentParams, ScalingParams,
};
use sle_nv::iter_integrals::compute_table;
use sle_nv::schemes::nv_step;
use sle_nv::stats::NormEstimate;
use sle_nv::trace::{build_trace, refine_trace, TraceParams, TraceResult};
use sle_nv::vf_algebra::{compose, enumerate_level, eval_term, Letter, MultiIndex};
use sle_nv::HalfPlanePoint;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Upper-half-plane root via the principal root and a sign flip.
fn upper_root(w: Complex64) -> Complex64 {
    let r = w.sqrt();
    if r.im < 0.0 || (r.im == 0.0 && r.re < 0.0) {
        -r
    } else {
        r
    }
}

fn splitting_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kappas: [f64; 4] = [2.0, 8.0 / 3.0, 4.0, 6.0];
    let mut worst = 0f64;
    for _ in 0..100_000 {
        let z = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(1e-3..3.0));
        let h: f64 = rng.random_range(0.0..=1.0);
        let db: f64 = rng.random_range(-3.0..=3.0);
        let kappa = kappas[rng.random_range(0..4)];
        let half_drift = |w: Complex64| upper_root(w * w - 4.0 * (h / 2.0));
        let expected = half_drift(half_drift(z) + kappa.sqrt() * db);
        let got = nv_step(HalfPlanePoint::try_from_complex(z).unwrap(), h, db, kappa).as_complex();
        worst = worst.max((got - expected).norm() / expected.norm().max(f64::MIN_POSITIVE));
    }
    ensure(worst <= 1e-12, || format!("worst relative error {worst:.3e}"))?;
    Ok(format!("1e5 cases, worst relative error {worst:.2e}"))
}

fn moment_preservation_check() -> Outcome {
    let params = MomentParams {
        kappa: 2.0,
        z0: Complex64::new(0.0, 1.0),
        horizon: 1.0,
        n_steps: 16,
        replicas: 100_000,
        seed: 0,
    };
    let report = moment_preservation(&params).map_err(|e| e.to_string())?;
    let last = report.rows.last().unwrap();
    ensure(last.t == 1.0 && last.target_re == -3.0 && last.target_im == 0.0, || {
        format!("target at T {last:?}")
    })?;
    let worst = report.rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    ensure(worst <= 4.0, || format!("max deviation {worst:.2} standard errors"))?;
    Ok(format!(
        "17 grid times, max deviation {worst:.2} SE; mean at T = {:.4}{:+.4}i",
        last.mean_re, last.mean_im
    ))
}

fn epsilon_scaling_check() -> Outcome {
    let params = ScalingParams::new(default_eps_grid(), 0.5, 2, 2.0, 1000, 0);
    let report = epsilon_scaling(&params).map_err(|e| e.to_string())?;
    let fit = report.fit.ok_or("no fit")?;
    ensure(report.rows.iter().all(|r| r.reference_converged == 1.0), || {
        "unconverged references".into()
    })?;
    ensure(fit.slope >= 0.9 && fit.r_squared >= 0.98, || {
        format!("slope {:.3}, r² {:.4}", fit.slope, fit.r_squared)
    })?;
    Ok(format!("slope {:.3}, r² {:.5}", fit.slope, fit.r_squared))
}

fn divergence_check() -> Outcome {
    let params = DivergenceParams::new(2f64.powi(-6), 0.5, words_up_to(4), 10_000, 0);
    let report = divergence_probe(&params).map_err(|e| e.to_string())?;
    let worst = report
        .rows
        .iter()
        .max_by(|a, b| a.exponent_error().total_cmp(&b.exponent_error()))
        .unwrap();
    ensure(worst.exponent_error() <= 0.1, || {
        format!(
            "word {}: exponent {:.3} vs {:.3}",
            worst.word, worst.fitted_exponent, worst.predicted_exponent
        )
    })?;
    let by_degree = magnitude_by_degree(&report.rows);
    ensure(by_degree.windows(2).all(|w| w[1].1 > w[0].1), || {
        format!("not increasing in degree: {by_degree:?}")
    })?;
    Ok(format!(
        "{} nonzero words, worst exponent error {:.3} ({}), magnitudes increase over {} degrees",
        report.rows.len(),
        worst.exponent_error(),
        worst.word,
        by_degree.len()
    ))
}

/// Eighth-order central first derivative along the real direction.
fn derivative(f: &dyn Fn(Complex64) -> Complex64, z: Complex64, h: f64) -> Complex64 {
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    W.iter()
        .enumerate()
        .map(|(k, w)| (f(z + (k + 1) as f64 * h) - f(z - (k + 1) as f64 * h)) * *w)
        .sum::<Complex64>()
        / h
}

/// `(V_{i1} ∂)(V_{i2} ∂)...(V_{ik} ∂) Id` by nested finite differences.
fn operator_chain(letters: &[Letter], a: f64, z: Complex64) -> Complex64 {
    match letters.split_first() {
        None => z,
        Some((first, rest)) => {
            let inner = |w: Complex64| operator_chain(rest, a, w);
            let d = derivative(&inner, z, 0.01);
            match first {
                Letter::Time => -a / z * d,
                Letter::Noise => d,
            }
        }
    }
}

fn vector_field_algebra() -> Outcome {
    for r in 0..=10 {
        let level = enumerate_level(r).map_err(|e| e.to_string())?;
        ensure(level.len() == 1 << r, || {
            format!("level {r} has {} entries", level.len())
        })?;
        for (word, term) in &level {
            let power = 1 - 2 * word.time_count() as i32 - word.noise_count() as i32;
            ensure(term.is_zero() || term.z_power == power, || {
                format!("{word}: z power {}", term.z_power)
            })?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for r in 1..=4 {
        for word in MultiIndex::all_of_length(r) {
            for _ in 0..4 {
                let kappa = [2.0, 8.0 / 3.0, 4.0, 6.0][rng.random_range(0..4)];
                let modulus: f64 = rng.random_range(0.8..2.0);
                let angle: f64 = rng.random_range(0.3..std::f64::consts::PI - 0.3);
                let z = Complex64::from_polar(modulus, angle);
                let symbolic = eval_term(&compose(&word), z, kappa).map_err(|e| e.to_string())?;
                let numeric = operator_chain(word.letters(), 2.0 / kappa, z);
                let err = (symbolic - numeric).norm() / symbolic.norm().max(1.0);
                worst = worst.max(err);
            }
        }
    }
    ensure(worst <= 1e-6, || format!("finite-difference mismatch {worst:.3e}"))?;
    Ok(format!(
        "2^r entries and power law for r <= 10; finite-difference oracle worst {worst:.2e}"
    ))
}

fn iterated_integrals() -> Outcome {
    let w0 = MultiIndex::from_digits(&[0]);
    let w1 = MultiIndex::from_digits(&[1]);
    let w01 = MultiIndex::from_digits(&[0, 1]);
    let w10 = MultiIndex::from_digits(&[1, 0]);
    let w00 = MultiIndex::from_digits(&[0, 0]);
    let w11 = MultiIndex::from_digits(&[1, 1]);
    let mut worst = [0f64; 3];
    for seed in 0..200 {
        let t = 0.1 + seed as f64 / 50.0;
        let path = BrownianPath::sample_uniform(t, 257, seed).unwrap();
        let table = compute_table(&path, t, 2).map_err(|e| e.to_string())?;
        let e = |w: &MultiIndex| table.entry(w).unwrap();
        let b = path.value_at(t).unwrap();
        worst[0] = worst[0].max((e(&w0) * e(&w1) - e(&w01) - e(&w10)).abs() / (t * b.abs()).max(1.0));
        worst[1] = worst[1].max((e(&w00) - t * t / 2.0).abs() / (t * t / 2.0));
        worst[2] = worst[2].max((e(&w11) - b * b / 2.0).abs() / (b * b / 2.0).max(1.0));
    }
    ensure(worst.iter().all(|&w| w <= 1e-12), || {
        format!("identity errors {worst:?}")
    })?;

    // independent replicas at both horizons, so the ratio carries real noise
    let (t, replicas, resolution) = (0.01, 10_000, 32);
    let mut details = Vec::new();
    for (word, degree) in [(&w0, 1.0), (&w1, 0.5), (&w01, 1.5)] {
        let norm_at = |horizon: f64, offset: u64| {
            let squares: Vec<f64> = (0..replicas)
                .map(|k| {
                    let path = BrownianPath::sample_uniform(horizon, resolution, offset + k).unwrap();
                    compute_table(&path, horizon, 2).unwrap().entry(word).unwrap().powi(2)
                })
                .collect();
            NormEstimate::from_squares(&squares)
        };
        let (small, unit) = (norm_at(t, 0), norm_at(1.0, 1 << 32));
        let exponent = (small.norm / unit.norm).ln() / t.ln();
        let stderr = small.log_stderr().hypot(unit.log_stderr()) / t.ln().abs();
        ensure((exponent - degree).abs() <= 3.0 * stderr + 1e-9, || {
            format!("word {word}: exponent {exponent:.4} ± {stderr:.4}, expected {degree}")
        })?;
        details.push(format!("{word}: {exponent:.3}±{stderr:.3}"));
    }
    Ok(format!(
        "identities worst {:.1e}; exponents {}",
        worst.iter().fold(0f64, |a, &b| a.max(b)),
        details.join(", ")
    ))
}

fn trace_at(kappa: f64, tol: f64) -> Result<TraceResult, String> {
    let mut path = BrownianPath::sample_uniform(1.0, 100, 7).map_err(|e| e.to_string())?;
    build_trace(&mut path, &TraceParams::new(1.0, kappa, tol)).map_err(|e| e.to_string())
}

fn check_trace(trace: &TraceResult, kappa: f64) -> Result<(), String> {
    ensure(trace.max_gap() < trace.tolerance, || {
        format!("κ = {kappa}: gap {}", trace.max_gap())
    })?;
    ensure(trace.points.iter().all(|p| p.z.im >= 0.0), || {
        format!("κ = {kappa}: point below the axis")
    })
}

fn is_nested(coarse: &[f64], fine: &[f64]) -> bool {
    coarse.iter().all(|t| fine.binary_search_by(|s| s.total_cmp(t)).is_ok())
}

fn trace_construction() -> Outcome {
    let straight = trace_at(0.0, 0.01)?;
    let worst = straight
        .points
        .iter()
        .map(|p| (p.z - Complex64::new(0.0, 2.0 * p.t.sqrt())).norm())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-10, || format!("zero-noise trace off by {worst:.3e}"))?;

    let mut counts = Vec::new();
    let mut notes = Vec::new();
    for kappa in [8.0 / 3.0, 6.0] {
        let coarse = trace_at(kappa, 0.02)?;
        let fine = trace_at(kappa, 0.01)?;
        check_trace(&coarse, kappa)?;
        check_trace(&fine, kappa)?;
        ensure(fine.len() >= coarse.len(), || {
            format!("κ = {kappa}: {} then {} points", coarse.len(), fine.len())
        })?;

        // continuing the coarse partition nests by construction
        let mut path = BrownianPath::sample_uniform(1.0, 100, 7).map_err(|e| e.to_string())?;
        let params = TraceParams::new(1.0, kappa, 0.02);
        let first = build_trace(&mut path, &params).map_err(|e| e.to_string())?;
        let continued = refine_trace(
            &mut path,
            &first,
            &TraceParams {
                tolerance: 0.01,
                ..params
            },
        )
        .map_err(|e| e.to_string())?;
        check_trace(&continued, kappa)?;
        ensure(is_nested(&first.partition, &continued.partition), || {
            format!("κ = {kappa}: continuation lost times")
        })?;

        if !is_nested(&coarse.partition, &fine.partition) {
            notes.push(format!("κ={kappa:.3} fresh rebuilds not nested"));
        }
        counts.push((coarse.len(), fine.len()));
    }
    ensure(counts[1].0 > counts[0].0 && counts[1].1 > counts[0].1, || {
        format!("κ ordering violated: {counts:?}")
    })?;
    let mut detail = format!(
        "zero noise {worst:.1e}; points (tol 0.02, 0.01): κ=8/3 {:?}, κ=6 {:?}",
        counts[0], counts[1]
    );
    if !notes.is_empty() {
        detail += &format!(" [note: {}]", notes.join(", "));
    }
    Ok(detail)
}

const CLI_RUNS: &[&[&str]] = &[
    &["trace", "--kappa", "2.6667", "--T", "1", "--tol", "0.02", "--seed", "7"],
    &[
        "moments",
        "--kappa",
        "2",
        "--steps",
        "16",
        "--replicas",
        "5000",
        "--seed",
        "3",
    ],
    &[
        "scaling",
        "--eps",
        "0.25,0.125,0.0625",
        "--replicas",
        "40",
        "--seed",
        "4",
    ],
    &[
        "divergence",
        "--eps",
        "0.03",
        "--max-len",
        "3",
        "--replicas",
        "500",
        "--seed",
        "5",
    ],
    &["compare", "--eps", "0.1", "--replicas", "40", "--seed", "6"],
    &["taylor-terms", "--r", "6"],
    &[
        "integrals",
        "--r",
        "3",
        "--n",
        "64",
        "--scaling-words",
        "0,1,01",
        "--scaling-replicas",
        "300",
        "--seed",
        "8",
    ],
];

fn run_cli(args: &[&str], threads: &str, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sle-nv"))
        .args(args)
        .args(["--threads", threads, "--out"])
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.success(), || {
        format!("{args:?} with {threads} threads exited with {status}")
    })
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (i, args) in CLI_RUNS.iter().enumerate() {
        let one = tmp.path().join(format!("{i}-one"));
        let eight = tmp.path().join(format!("{i}-eight"));
        run_cli(args, "1", &one)?;
        run_cli(args, "8", &eight)?;
        let mut names: Vec<_> = std::fs::read_dir(&one)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy().ends_with(".csv"))
            .collect();
        names.sort();
        ensure(!names.is_empty(), || format!("{args:?} wrote no CSV"))?;
        for name in names {
            let a = std::fs::read(one.join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(eight.join(&name)).map_err(|e| e.to_string())?;
            ensure(a == b, || {
                format!("{args:?}: {} differs between 1 and 8 threads", name.to_string_lossy())
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "{} commands, {compared} CSV files byte-identical",
        CLI_RUNS.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("splitting identity", splitting_identity),
        ("second-moment preservation", moment_preservation_check),
        ("epsilon scaling", epsilon_scaling_check),
        ("divergence beyond eps^2", divergence_check),
        ("vector-field algebra", vector_field_algebra),
        ("iterated-integral identities", iterated_integrals),
        ("trace construction", trace_construction),
        ("CLI determinism", cli_determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
