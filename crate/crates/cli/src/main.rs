//! Batch diagnostics for phase-space scenarios.
//!
//! Structured results go to stdout as JSON; bulk time series go to the
//! `--out` CSV file. Exit codes: 0 success, 1 runtime or physics error,
//! 2 usage or configuration error, 3 assertion or check failure.
//! `LIOUVILLE_THREADS` caps worker threads (0 or unset means automatic).

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use liouville_core::distributions::{Distribution, GridDensity, ParticleEnsemble};
use liouville_core::dynamics;
use liouville_core::entropy;
use liouville_core::error::Error;
use liouville_core::irreducible::{self, InternalNoise, InternalTransform};
use liouville_core::phase_space::{check_canonical, sample_box_points};
use liouville_core::scenarios::{self, MapParams, Scenario};
use liouville_core::uncertainty::{self, BoundCheckOptions};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "liouville", version, about = "Phase-space entropy diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its trajectory CSV.
    Evolve {
        /// Scenario JSON document.
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Fail (exit 3) if |entropy(t) − entropy(0)| exceeds this anywhere.
        #[arg(long)]
        assert_entropy: Option<f64>,
        /// Fail (exit 3) if product(t) < bound − tol anywhere.
        #[arg(long)]
        assert_bound: Option<f64>,
    },
    /// Check the canonical condition J'ΩJ = Ω of a registry map.
    CheckCanonical {
        /// Map name: identity, scale, dilate, rotate, shear.
        map: String,
        /// Scale factor (scale, dilate).
        #[arg(long)]
        a: Option<f64>,
        /// Rotation angle (rotate).
        #[arg(long)]
        theta: Option<f64>,
        /// Shear coefficient (shear).
        #[arg(long)]
        s: Option<f64>,
        /// Degrees of freedom.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Number of sample points.
        #[arg(long, default_value_t = 1000)]
        points: usize,
        /// Max-abs residual tolerance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Estimate the entropy of an ensemble CSV (columns q1..qn,k1..kn,weight).
    Entropy {
        /// Input CSV of samples.
        #[arg(long)]
        input: PathBuf,
        /// analytic (Gaussian moment fit), grid (histogram plug-in), or knn.
        #[arg(long, default_value = "knn")]
        method: String,
        /// Neighbor order for knn.
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Break coincident points with tiny uniform jitter (knn).
        #[arg(long, default_value = "off", value_parser = ["on", "off"])]
        jitter: String,
        /// Bins per axis for the grid method.
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check the spread-entropy bound for a scenario's initial state.
    Bound {
        /// Scenario JSON document.
        #[arg(long)]
        scenario: PathBuf,
        /// Scale constant for the quantum comparison column.
        #[arg(long, default_value_t = 1.0)]
        hbar: f64,
    },
    /// Apply the internal transform c = a + ib and verify its laws by
    /// Monte Carlo.
    Internal {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Internal noise law: uniform or gaussian.
        #[arg(long, default_value = "uniform", value_parser = ["uniform", "gaussian"])]
        dist: String,
    },
    /// List built-in systems, maps, and distributions.
    Registry,
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}

fn init_thread_pool() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("LIOUVILLE_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    // A failure here means a pool already exists; keep it.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

/// Usage and configuration problems exit 2; runtime numerics exit 1.
fn classify(err: &Error) -> u8 {
    match err {
        Error::Config { .. }
        | Error::UnknownName { .. }
        | Error::Parse(_)
        | Error::InvalidTransform(_)
        | Error::UnsupportedScheme(_)
        | Error::UnsupportedConfiguration(_)
        | Error::UnsupportedRepresentation(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Evolve {
            scenario,
            out,
            assert_entropy,
            assert_bound,
        } => cmd_evolve(&scenario, &out, assert_entropy, assert_bound),
        Command::CheckCanonical {
            map,
            a,
            theta,
            s,
            dim,
            points,
            tol,
            seed,
        } => cmd_check_canonical(&map, MapParams { a, theta, s, dof: Some(dim) }, points, tol, seed),
        Command::Entropy {
            input,
            method,
            k,
            jitter,
            bins,
            seed,
        } => cmd_entropy(&input, &method, k, jitter == "on", bins, seed),
        Command::Bound { scenario, hbar } => cmd_bound(&scenario, hbar),
        Command::Internal {
            a,
            b,
            samples,
            seed,
            dist,
        } => cmd_internal(a, b, samples, seed, &dist),
        Command::Registry => {
            print_json(&scenarios::registry_listing());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_scenario_file(path: &PathBuf) -> Result<Scenario, Error> {
    let text = fs::read_to_string(path)?;
    scenarios::load_scenario(&text)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn cmd_evolve(
    scenario_path: &PathBuf,
    out: &PathBuf,
    assert_entropy: Option<f64>,
    assert_bound: Option<f64>,
) -> Result<ExitCode, Error> {
    let scenario = load_scenario_file(scenario_path)?;
    let sys = scenario.system()?;
    let dist = scenario.initial_distribution()?;
    let cfg = scenario.integrator()?;
    let opts = dynamics::EvolveOptions {
        entropy: scenario.entropy_method()?,
        seed: scenario.seed,
        ensemble_count: scenario.representation.count.unwrap_or(100_000),
    };
    let evolution = dynamics::evolve(&sys, &dist, &cfg, &opts)?;
    let mut file = fs::File::create(out)?;
    evolution.record.write_csv(&mut file)?;

    let drift = evolution.record.max_entropy_drift();
    let shortfall = evolution.record.max_bound_shortfall();
    let entropy_ok = assert_entropy.map(|tol| drift <= tol);
    let bound_ok = assert_bound.map(|tol| shortfall <= tol);
    print_json(&serde_json::json!({
        "rows": evolution.record.rows.len(),
        "t_final": evolution.record.rows.last().map(|r| r.t),
        "entropy_drift": drift,
        "bound_shortfall": shortfall,
        "entropy_ok": entropy_ok,
        "bound_ok": bound_ok,
        "out": out,
    }));
    if entropy_ok == Some(false) || bound_ok == Some(false) {
        return Ok(ExitCode::from(EXIT_CHECK_FAILED));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check_canonical(
    map_name: &str,
    params: MapParams,
    points: usize,
    tol: f64,
    seed: u64,
) -> Result<ExitCode, Error> {
    if tol <= 0.0 || !tol.is_finite() {
        return Err(Error::config("tol", format!("must be > 0, got {tol}")));
    }
    if points == 0 {
        return Err(Error::config("points", "must be >= 1"));
    }
    let map = scenarios::build_map(map_name, &params)?;
    let pts = sample_box_points(map.dof(), points, 2.0, seed);
    let report = check_canonical(&map, &pts, tol)?;
    print_json(&report);
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    })
}

fn cmd_entropy(
    input: &PathBuf,
    method: &str,
    k: usize,
    jitter: bool,
    bins: usize,
    seed: u64,
) -> Result<ExitCode, Error> {
    let file = fs::File::open(input)?;
    let ens = ParticleEnsemble::read_csv(BufReader::new(file), seed)?;
    let estimate = match method {
        "knn" => {
            if ens.len() <= k {
                return Err(Error::config(
                    "k",
                    format!("need more than k = {k} samples, got {}", ens.len()),
                ));
            }
            entropy::entropy_knn(&ens, k, jitter, seed)?
        }
        "analytic" => {
            // Entropy of the Gaussian matching the sample moments.
            let g = Distribution::Ensemble(ens).moments()?.fit_gaussian()?;
            entropy::entropy_analytic(&g)
        }
        "grid" => {
            if bins == 0 {
                return Err(Error::config("bins", "must be >= 1"));
            }
            entropy::entropy_grid(&histogram(&ens, bins)?)
        }
        other => {
            return Err(Error::config(
                "method",
                format!("unknown method `{other}` (valid: analytic, grid, knn)"),
            ))
        }
    };
    print_json(&estimate);
    Ok(ExitCode::SUCCESS)
}

/// Equal-width histogram over the sample bounding box, widened a hair so
/// extreme points land inside.
fn histogram(ens: &ParticleEnsemble, bins: usize) -> Result<GridDensity, Error> {
    let dims = 2 * ens.dof();
    let mut low = vec![f64::INFINITY; dims];
    let mut high = vec![f64::NEG_INFINITY; dims];
    for i in 0..ens.len() {
        for (axis, v) in ens.flat(i).iter().enumerate() {
            low[axis] = low[axis].min(*v);
            high[axis] = high[axis].max(*v);
        }
    }
    for axis in 0..dims {
        let pad = 1e-9 * (high[axis] - low[axis]).max(1.0);
        low[axis] -= pad;
        high[axis] += pad;
    }
    let mut counts = vec![0.0f64; bins.pow(dims as u32)];
    for i in 0..ens.len() {
        let mut cell = 0usize;
        for (axis, v) in ens.flat(i).iter().enumerate() {
            let t = (v - low[axis]) / (high[axis] - low[axis]);
            let b = ((t * bins as f64) as usize).min(bins - 1);
            cell = cell * bins + b;
        }
        counts[cell] += ens.weights()[i];
    }
    GridDensity::normalized(low, high, vec![bins; dims], counts)
}

fn cmd_bound(scenario_path: &PathBuf, hbar: f64) -> Result<ExitCode, Error> {
    let scenario = load_scenario_file(scenario_path)?;
    let dist = scenario.initial_distribution()?;
    let method = scenario.entropy_method()?;
    let opts = BoundCheckOptions {
        seed: scenario.seed,
        sample_count: scenario.representation.count.unwrap_or(100_000),
    };
    let report = uncertainty::check_bound(&dist, method, &opts)?;
    let quantum = uncertainty::quantum_comparison(hbar)?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["quantum_floor"] = serde_json::json!(quantum.floor);
    value["quantum_entropy"] = serde_json::json!(quantum.entropy);
    value["quantum_label"] = serde_json::json!(quantum.label);
    print_json(&value);
    Ok(ExitCode::SUCCESS)
}

fn cmd_internal(a: f64, b: f64, samples: usize, seed: u64, dist: &str) -> Result<ExitCode, Error> {
    let transform = InternalTransform::new(a, b)?;
    let noise = match dist {
        "gaussian" => InternalNoise::Gaussian,
        _ => InternalNoise::Uniform,
    };
    let check = irreducible::monte_carlo_pearson(&transform, noise, samples, seed)?;
    print_json(&serde_json::json!({
        "norm": transform.norm(),
        "phase": transform.phase(),
        "sigma_factor": transform.norm(),
        "predicted_pearson": check.predicted,
        "mc_pearson": check.pearson,
        "mc_error": check.error,
    }));
    Ok(ExitCode::SUCCESS)
}
