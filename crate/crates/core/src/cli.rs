//! The `sle-nv` command line.
//!
//! Each subcommand writes its CSV (and SVG for traces) plus a JSON sidecar
//! echoing the full configuration into the output directory. Exit codes: 0
//! on success, 1 for invalid input, 2 for numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::experiments::{
    default_eps_grid, divergence_probe, epsilon_scaling, moment_preservation, scheme_comparison, words_up_to,
    ComparisonParams, DivergenceParams, Driver, MomentParams, ScalingParams, DEFAULT_REFERENCE_TOL,
};
use crate::iter_integrals::{compute_table_with, l2_scaling_estimate, IntegralConvention};
use crate::schemes::TaylorTruncation;
use crate::trace::{build_trace, render_svg, TraceParams};
use crate::vf_algebra::{enumerate_level_with_cap, MultiIndex, DEFAULT_LEVEL_CAP};

/// Environment variable overriding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SLE_NV_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "sle-nv",
    version,
    about = "SLE traces and Loewner-equation scheme experiments"
)]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory [default: $SLE_NV_OUTPUT_DIR, then ./out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an SLE trace by adaptive bisection.
    Trace(TraceArgs),
    /// One-step Taylor error against epsilon.
    Scaling(ScalingArgs),
    /// L2 size of individual Taylor terms beyond the eps^2 horizon.
    Divergence(DivergenceArgs),
    /// Second moment of the NV scheme against its exact value.
    Moments(MomentArgs),
    /// One-step errors of Euler, Taylor and NV side by side.
    Compare(CompareArgs),
    /// Dump the vector-field compositions of one level.
    TaylorTerms(TaylorTermsArgs),
    /// Dump the iterated integrals of one sampled path.
    Integrals(IntegralsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub n_init: usize,
    #[arg(long, default_value_t = 40)]
    pub max_depth: u32,
    /// Translate the trace by sqrt(kappa) B(T).
    #[arg(long)]
    pub shift: bool,
    /// Drive with a stored path (CSV `t,B`) instead of sampling one.
    #[arg(long)]
    pub path_in: Option<PathBuf>,
    /// Also write the refined driving path.
    #[arg(long)]
    pub path_out: bool,
    #[arg(long, default_value_t = 800)]
    pub width: u32,
    #[arg(long, default_value_t = 800)]
    pub height: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    /// Comma-separated, strictly decreasing [default: 2^-3, ..., 2^-7].
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, value_enum, default_value_t = TaylorTruncation::ByLength)]
    pub truncation: TaylorTruncation,
    #[arg(long, default_value_t = DEFAULT_REFERENCE_TOL)]
    pub reference_tol: f64,
    #[arg(long, default_value_t = 1 << 20)]
    pub max_substeps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DivergenceArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.015625)]
    pub eps: f64,
    /// Probe every word up to this length.
    #[arg(long, default_value_t = 4)]
    pub max_len: usize,
    /// Comma-separated words such as `0,01,110`; overrides --max-len.
    #[arg(long, value_delimiter = ',')]
    pub words: Vec<MultiIndex>,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long, default_value_t = 2)]
    pub octaves: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct MomentArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    pub z0_re: f64,
    #[arg(long, default_value_t = 1.0)]
    pub z0_im: f64,
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 16)]
    pub steps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0625)]
    pub eps: f64,
    /// Comma-separated step lengths [default: eps^3, eps^2.5, eps^2, eps^1.5].
    #[arg(long, value_delimiter = ',')]
    pub horizons: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
    #[arg(long, value_enum, default_value_t = Driver::Brownian)]
    pub driver: Driver,
    #[arg(long, default_value_t = DEFAULT_REFERENCE_TOL)]
    pub reference_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TaylorTermsArgs {
    /// Word length.
    #[arg(long)]
    pub r: usize,
    /// Refuse levels above this.
    #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct IntegralsArgs {
    #[arg(long = "T", visible_alias = "horizon", default_value_t = 1.0)]
    pub horizon: f64,
    /// Longest word.
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    /// Linear pieces of the sampled path.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = IntegralConvention::Stratonovich)]
    pub convention: IntegralConvention,
    #[arg(long)]
    pub path_in: Option<PathBuf>,
    /// Also estimate `||X^I_{0,t}||_{L2}` for these words.
    #[arg(long, value_delimiter = ',')]
    pub scaling_words: Vec<MultiIndex>,
    #[arg(long, default_value_t = 0.01)]
    pub scaling_t: f64,
    #[arg(long, default_value_t = 10_000)]
    pub scaling_replicas: usize,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::invalid("threads", e.to_string()))?;
    let out = output_dir(cli.out.as_deref());
    let ctx = Context {
        out,
        force: cli.force,
        seed: cli.seed,
        threads: pool.current_num_threads(),
        argv,
    };
    pool.install(|| match &cli.command {
        Command::Trace(a) => run_trace(&ctx, a),
        Command::Scaling(a) => run_scaling(&ctx, a),
        Command::Divergence(a) => run_divergence(&ctx, a),
        Command::Moments(a) => run_moments(&ctx, a),
        Command::Compare(a) => run_compare(&ctx, a),
        Command::TaylorTerms(a) => run_taylor_terms(&ctx, a),
        Command::Integrals(a) => run_integrals(&ctx, a),
    })
}

/// `--out`, then the environment override, then `./out`.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match (flag, std::env::var_os(OUTPUT_DIR_ENV)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(env)) if !env.is_empty() => PathBuf::from(env),
        _ => PathBuf::from("out"),
    }
}

struct Context<'a> {
    out: PathBuf,
    force: bool,
    seed: u64,
    threads: usize,
    argv: &'a [String],
}

impl Context<'_> {
    /// Resolves output paths, refusing to clobber without `--force`.
    fn targets(&self, names: &[&str]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.out)?;
        let paths: Vec<PathBuf> = names.iter().map(|n| self.out.join(n)).collect();
        if !self.force {
            if let Some(p) = paths.iter().find(|p| p.exists()) {
                return Err(Error::invalid(
                    "out",
                    format!("{} exists; pass --force to overwrite", p.display()),
                ));
            }
        }
        Ok(paths)
    }

    fn sidecar(&self, command: &str, config: impl Serialize, started: Instant) -> serde_json::Value {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        json!({
            "command": command,
            "argv": self.argv,
            "seed": self.seed,
            "threads": self.threads,
            "precision": "f64",
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "runtime_seconds": started.elapsed().as_secs_f64(),
            "timestamp_unix": timestamp,
        })
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serialises");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn run_trace(ctx: &Context, a: &TraceArgs) -> Result<()> {
    let started = Instant::now();
    let mut names = vec!["trace.csv", "trace.svg", "trace.json"];
    if a.path_out {
        names.push("trace_path.csv");
    }
    let paths = ctx.targets(&names)?;
    let params = TraceParams {
        horizon: a.horizon,
        kappa: a.kappa,
        n_init: a.n_init,
        tolerance: a.tol,
        max_depth: a.max_depth,
        apply_shift: a.shift,
    };
    params.validate()?;
    let mut path = match &a.path_in {
        Some(p) => BrownianPath::read_csv(std::fs::File::open(p)?, ctx.seed)?,
        None => BrownianPath::sample_uniform(a.horizon, a.n_init, ctx.seed)?,
    };
    let trace = build_trace(&mut path, &params)?;
    trace.write_csv(std::fs::File::create(&paths[0])?)?;
    std::fs::write(&paths[1], render_svg(&trace, a.width, a.height)?)?;
    if a.path_out {
        path.write_csv(std::fs::File::create(&paths[3])?)?;
    }
    let stats = trace.summary_json();
    println!("{stats}");
    let mut sidecar = ctx.sidecar("trace", a, started);
    sidecar["stats"] = stats;
    write_json(&paths[2], &sidecar)
}

fn run_scaling(ctx: &Context, a: &ScalingArgs) -> Result<()> {
    let started = Instant::now();
    let paths = ctx.targets(&["scaling.csv", "scaling.json"])?;
    let eps = if a.eps.is_empty() {
        default_eps_grid()
    } else {
        a.eps.clone()
    };
    let mut params = ScalingParams::new(eps, a.delta, a.r, a.kappa, a.replicas, ctx.seed);
    params.truncation = a.truncation;
    params.reference_tol = a.reference_tol;
    params.max_substeps = a.max_substeps;
    let report = epsilon_scaling(&params)?;
    report.write_csv(std::fs::File::create(&paths[0])?)?;
    warn(&report.warnings);
    let mut sidecar = ctx.sidecar("scaling", a, started);
    sidecar["report"] = report.sidecar(started.elapsed().as_secs_f64());
    write_json(&paths[1], &sidecar)
}

fn run_divergence(ctx: &Context, a: &DivergenceArgs) -> Result<()> {
    let started = Instant::now();
    let paths = ctx.targets(&["divergence.csv", "divergence.json"])?;
    let words = if a.words.is_empty() {
        words_up_to(a.max_len)
    } else {
        a.words.clone()
    };
    let mut params = DivergenceParams::new(a.eps, a.delta, words, a.replicas, ctx.seed);
    params.kappa = a.kappa;
    params.resolution = a.resolution;
    params.octaves = a.octaves;
    let report = divergence_probe(&params)?;
    report.write_csv(std::fs::File::create(&paths[0])?)?;
    let mut sidecar = ctx.sidecar("divergence", a, started);
    sidecar["report"] = report.sidecar(started.elapsed().as_secs_f64());
    write_json(&paths[1], &sidecar)
}

fn run_moments(ctx: &Context, a: &MomentArgs) -> Result<()> {
    let started = Instant::now();
    let paths = ctx.targets(&["moments.csv", "moments.json"])?;
    let params = MomentParams {
        kappa: a.kappa,
        z0: Complex64::new(a.z0_re, a.z0_im),
        horizon: a.horizon,
        n_steps: a.steps,
        replicas: a.replicas,
        seed: ctx.seed,
    };
    let report = moment_preservation(&params)?;
    report.write_csv(std::fs::File::create(&paths[0])?)?;
    let mut sidecar = ctx.sidecar("moments", a, started);
    sidecar["report"] = report.sidecar(started.elapsed().as_secs_f64());
    write_json(&paths[1], &sidecar)
}

fn run_compare(ctx: &Context, a: &CompareArgs) -> Result<()> {
    let started = Instant::now();
    let paths = ctx.targets(&["compare.csv", "compare.json"])?;
    let horizons = if a.horizons.is_empty() {
        [3.0, 2.5, 2.0, 1.5].iter().map(|p| a.eps.powf(*p)).collect()
    } else {
        a.horizons.clone()
    };
    let mut params = ComparisonParams::new(a.kappa, a.eps, horizons, a.replicas, ctx.seed);
    params.driver = a.driver;
    params.reference_tol = a.reference_tol;
    let report = scheme_comparison(&params)?;
    report.write_csv(std::fs::File::create(&paths[0])?)?;
    let mut sidecar = ctx.sidecar("compare", a, started);
    sidecar["report"] = report.sidecar(started.elapsed().as_secs_f64());
    write_json(&paths[1], &sidecar)
}

#[derive(Serialize)]
struct TermRow {
    word: String,
    coeff_num: i64,
    coeff_den: i64,
    a_power: u32,
    z_power: i32,
}

fn run_taylor_terms(ctx: &Context, a: &TaylorTermsArgs) -> Result<()> {
    let started = Instant::now();
    let paths = ctx.targets(&["taylor_terms.csv", "taylor_terms.json"])?;
    let level = enumerate_level_with_cap(a.r, a.cap)?;
    let mut w = csv::Writer::from_path(&paths[0])?;
    for (word, term) in &level {
        w.serialize(TermRow {
            word: word.to_string(),
            coeff_num: *term.coeff.numer(),
            coeff_den: *term.coeff.denom(),
            a_power: term.a_power,
            z_power: term.z_power,
        })?;
    }
    w.flush()?;
    write_json(&paths[1], &ctx.sidecar("taylor-terms", a, started))
}

#[derive(Serialize)]
struct ScalingEstimateRow {
    word: String,
    t: f64,
    estimate: f64,
    stderr: f64,
}

fn run_integrals(ctx: &Context, a: &IntegralsArgs) -> Result<()> {
    let started = Instant::now();
    let mut names = vec!["integrals.csv", "integrals.json"];
    if !a.scaling_words.is_empty() {
        names.push("integrals_scaling.csv");
    }
    let paths = ctx.targets(&names)?;
    let path = match &a.path_in {
        Some(p) => BrownianPath::read_csv(std::fs::File::open(p)?, ctx.seed)?,
        None => BrownianPath::sample_uniform(a.horizon, a.n, ctx.seed)?,
    };
    let table = compute_table_with(&path, a.horizon, a.r, a.convention)?;
    table.write_csv(std::fs::File::create(&paths[0])?)?;
    if !a.scaling_words.is_empty() {
        let mut w = csv::Writer::from_path(&paths[2])?;
        for word in &a.scaling_words {
            let est = l2_scaling_estimate(word, a.scaling_t, a.scaling_replicas, a.n, ctx.seed)?;
            w.serialize(ScalingEstimateRow {
                word: word.to_string(),
                t: a.scaling_t,
                estimate: est.at_t.norm,
                stderr: est.at_t.stderr,
            })?;
        }
        w.flush()?;
    }
    write_json(&paths[1], &ctx.sidecar("integrals", a, started))
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}
