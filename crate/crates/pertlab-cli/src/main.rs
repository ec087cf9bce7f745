//! Command-line driver: seeded experiment dispatch with deterministic
//! CSV/JSON outputs. Exit codes: 0 success, 2 configuration/validation
//! error, 1 numerical invariant failure.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pertlab::config::Tolerances;
use pertlab::cubes::scan_square_window;
use pertlab::doi::{divided_differences, quasicommutator_check, verify_sum_formula, DdVariant};
use pertlab::experiments::{
    counterexample_d2f, holder_experiment, lipschitz_experiment,
    positive_multiplier_check_3d, quasicommutator_experiment, random_tuple_pair,
    schatten_holder_experiment, CounterexampleConfig, ExperimentReport, ExperimentsError,
    HolderMode, SchattenHolderMode, TupleEnsemble,
};
use pertlab::funcalc::{bernstein_check, make_bandlimited, FilterBank, Window};
use pertlab::linalg::CMatrix;
use pertlab::multipliers::{build_ledger, ledger_totals, MultiplierFamily};
use pertlab::util::{complex_gaussian, trial_rng};

/// Fixed default seed so CI runs are reproducible without flags.
const DEFAULT_SEED: u64 = 17;

#[derive(Debug)]
enum CliError {
    /// Bad flags, bad config file, out-of-range parameters. Exit 2.
    Validation(String),
    /// A numerical invariant failed while running. Exit 1.
    Numerical(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn numerical<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn experiment_err(e: ExperimentsError) -> CliError {
    match e {
        ExperimentsError::AlphaOutOfRange(_)
        | ExperimentsError::InvalidExponent(_)
        | ExperimentsError::BadParameters(_) => validation(e),
        other => numerical(other),
    }
}

// ---------------------------------------------------------------------------
// Configuration: flags > JSON config file > defaults
// ---------------------------------------------------------------------------

/// JSON config file schema; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<usize>,
    dim: Option<usize>,
    trials: Option<u64>,
    seed: Option<u64>,
    alpha: Option<f64>,
    p: Option<f64>,
    sigma: Option<f64>,
    window: Option<f64>,
    max_level: Option<u32>,
    mode: Option<String>,
    sections: Option<Vec<i64>>,
    jobs: Option<usize>,
    out: Option<String>,
}

/// Numeric flags shared by most subcommands.
#[derive(Debug, Clone, Args)]
struct CommonArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Output path prefix; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Parser)]
#[command(name = "pertlab", version, about = "perturbation-inequality laboratory")]
struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread bound for parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact finite identities: increment and quasicommutator residuals.
    VerifyDoi(CommonArgs),
    /// Assemble the multiplier family and emit its per-scale norm ledger.
    BuildMultipliers {
        #[command(flatten)]
        common: CommonArgs,
        /// Half-width of the verification window.
        #[arg(long)]
        window: Option<f64>,
        /// Largest dyadic scale exponent in the ledger.
        #[arg(long)]
        max_level: Option<u32>,
    },
    /// Exhaustive dyadic-cube geometry scan over a square window.
    CubesStats {
        #[arg(long)]
        n: Option<usize>,
        /// Window side length in unit cubes.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        max_level: Option<u32>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Operator-norm Lipschitz ratio campaign.
    Lipschitz(CommonArgs),
    /// Hölder ratio campaign (power or truncated-log modulus).
    Holder {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        alpha: Option<f64>,
        /// "power" or "log".
        #[arg(long)]
        mode: Option<String>,
    },
    /// Schatten-Hölder ratio campaign.
    Schatten {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        /// "full", "partial", "ideal", "weak-one", or "besov-one".
        #[arg(long)]
        mode: Option<String>,
    },
    /// Quasicommutator ratio campaign with exact identity residuals.
    Quasicommutator {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Kernel-section diagnostics for the middle divided difference.
    Counterexample {
        /// Comma-separated section half-widths.
        #[arg(long, value_delimiter = ',')]
        sections: Option<Vec<i64>>,
        /// Also run the outer-divided-difference contrast battery.
        #[arg(long)]
        positive: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Dyadic filter partition and derivative-ratio diagnostics.
    Filters {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        out: Option<String>,
    },
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| validation(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| validation(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

struct Resolved {
    n: usize,
    dim: usize,
    trials: u64,
    seed: u64,
    sigma: f64,
    out: String,
}

fn resolve_common(c: &CommonArgs, f: &FileConfig, default_out: &str) -> Result<Resolved, CliError> {
    let r = Resolved {
        n: pick(c.n, f.n, 3),
        dim: pick(c.dim, f.dim, 8),
        trials: pick(c.trials, f.trials, 100),
        seed: pick(c.seed, f.seed, DEFAULT_SEED),
        sigma: pick(c.sigma, f.sigma, 1.0),
        out: c
            .out
            .clone()
            .or_else(|| f.out.clone())
            .unwrap_or_else(|| default_out.to_string()),
    };
    if r.n == 0 || r.n > 4 {
        return Err(validation(format!("n = {} outside 1..=4", r.n)));
    }
    if r.dim == 0 || r.dim > 64 {
        return Err(validation(format!("dim = {} outside 1..=64", r.dim)));
    }
    if r.trials == 0 || r.trials > 100_000 {
        return Err(validation(format!("trials = {} outside 1..=100000", r.trials)));
    }
    if !(r.sigma > 0.0 && r.sigma.is_finite()) {
        return Err(validation(format!("sigma = {} must be positive", r.sigma)));
    }
    Ok(r)
}

fn write_report(report: &ExperimentReport, out: &str) -> Result<(), CliError> {
    let csv_path = format!("{out}.csv");
    let json_path = format!("{out}.json");
    let mut buf = Vec::new();
    report.write_csv(&mut buf).map_err(numerical)?;
    fs::write(&csv_path, buf).map_err(|e| validation(format!("write {csv_path}: {e}")))?;
    fs::write(&json_path, report.to_json_string().map_err(numerical)?)
        .map_err(|e| validation(format!("write {json_path}: {e}")))?;
    println!("wrote {csv_path} and {json_path}");
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &str) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| numerical(format!("serialize: {e}")))?;
    fs::write(path, text).map_err(|e| validation(format!("write {path}: {e}")))?;
    println!("wrote {path}");
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

fn run_verify_doi(r: &Resolved) -> Result<(), CliError> {
    let cfg = Tolerances::default();
    let mut rows = String::from("trial,sum_residual,qc_residual\n");
    let mut worst_sum = 0.0f64;
    let mut worst_qc = 0.0f64;
    for t in 0..r.trials {
        let mut rng = trial_rng(r.seed, t);
        let f = make_bandlimited(r.n, r.sigma, 6, r.seed ^ (t.wrapping_mul(0x9e37)))
            .map_err(numerical)?;
        let ensemble = match t % 3 {
            0 => TupleEnsemble::SharedBasis,
            1 => TupleEnsemble::IndependentBasis,
            _ => TupleEnsemble::NearbyCommuting,
        };
        let (a, b) = random_tuple_pair(r.n, r.dim, 3.0, 0.5, ensemble, &mut rng);
        let kernels: Vec<_> = (0..r.n)
            .map(|j| divided_differences(&f, DdVariant::Chain(j), cfg.divided_difference_gap))
            .collect::<Result<_, _>>()
            .map_err(numerical)?;
        let res_sum = verify_sum_formula(&f, &a, &b, &kernels, &cfg).map_err(numerical)?;
        let rmat = CMatrix::from_fn(r.dim, r.dim, |_, _| complex_gaussian(&mut rng));
        let res_qc =
            quasicommutator_check(&f, &a, &b, &rmat, &kernels, &cfg).map_err(numerical)?;
        rows.push_str(&format!("{t},{res_sum:.6e},{res_qc:.6e}\n"));
        worst_sum = worst_sum.max(res_sum);
        worst_qc = worst_qc.max(res_qc);
    }
    let tol = 1e-8;
    fs::write(format!("{}.csv", r.out), rows)
        .map_err(|e| validation(format!("write {}.csv: {e}", r.out)))?;
    write_json(
        &serde_json::json!({
            "schema_version": 1,
            "name": "verify-doi",
            "n": r.n, "dim": r.dim, "trials": r.trials, "seed": r.seed, "sigma": r.sigma,
            "max_sum_residual": worst_sum,
            "max_qc_residual": worst_qc,
            "tolerance": tol,
        }),
        &format!("{}.json", r.out),
    )?;
    println!("wrote {}.csv", r.out);
    if worst_sum > tol || worst_qc > tol {
        return Err(CliError::Numerical(format!(
            "identity residuals {worst_sum:.3e} / {worst_qc:.3e} exceed {tol:.0e}"
        )));
    }
    Ok(())
}

fn run_build_multipliers(
    r: &Resolved,
    window: f64,
    max_level: u32,
) -> Result<(), CliError> {
    if !(window > 0.0) {
        return Err(validation(format!("window = {window} must be positive")));
    }
    if max_level > 12 {
        return Err(validation(format!("max_level = {max_level} outside 0..=12")));
    }
    let cfg = Tolerances::default();
    let f = make_bandlimited(r.n, r.sigma, 5, r.seed).map_err(numerical)?;
    let family = MultiplierFamily::assemble(&f, Window::cube(r.n, -window, window), max_level)
        .map_err(numerical)?;
    let residual = family
        .representation_residual(2000, r.seed)
        .map_err(numerical)?;
    let ledger = build_ledger(&family, &cfg, max_level, r.seed).map_err(numerical)?;
    let totals = ledger_totals(&ledger).map_err(numerical)?;
    let mut buf = Vec::new();
    ledger.write_csv(&mut buf).map_err(numerical)?;
    fs::write(format!("{}.csv", r.out), buf)
        .map_err(|e| validation(format!("write {}.csv: {e}", r.out)))?;
    write_json(
        &serde_json::json!({
            "schema_version": 1,
            "name": "build-multipliers",
            "n": r.n, "sigma": family.sigma(), "seed": r.seed,
            "window": window, "max_scale_exponent": max_level,
            "representation_residual": residual,
            "per_coordinate_totals": totals,
            "empirical_constant": ledger.empirical_constant,
        }),
        &format!("{}.json", r.out),
    )?;
    println!("wrote {}.csv", r.out);
    Ok(())
}

fn run_cubes_stats(n: usize, side: i64, max_level: u32, out: &str) -> Result<(), CliError> {
    if n == 0 || n > 3 {
        return Err(validation(format!("n = {n} outside 1..=3")));
    }
    if side <= 0 || side > 4096 {
        return Err(validation(format!("window = {side} outside 1..=4096")));
    }
    if max_level > 30 {
        return Err(validation(format!("max_level = {max_level} outside 0..=30")));
    }
    let stats = scan_square_window(n, side, max_level).map_err(numerical)?;
    write_json(
        &serde_json::json!({
            "schema_version": 1,
            "name": "cubes-stats",
            "n": stats.n,
            "side": stats.side,
            "per_level_counts": stats.per_level,
            "max_partner_count": stats.max_partners,
            "partner_bound": stats.partner_bound,
            "covered_volume": stats.covered.to_string(),
            "window_volume": stats.volume.to_string(),
            "covers": stats.covers(),
        }),
        &format!("{out}.json"),
    )?;
    if !stats.covers() {
        return Err(CliError::Numerical("maximal cubes fail to cover the window".into()));
    }
    if stats.max_partners > stats.partner_bound {
        return Err(CliError::Numerical(format!(
            "partner count {} exceeds bound {}",
            stats.max_partners, stats.partner_bound
        )));
    }
    Ok(())
}

fn run_filters(seed: u64, trials: u64, out: &str) -> Result<(), CliError> {
    let cfg = Tolerances::default();
    let bank = FilterBank::new();
    // Partition of unity on a log grid.
    let mut worst_partition = 0.0f64;
    for i in 0..200 {
        let t = 1e-3 * (1e6f64).powf(i as f64 / 199.0);
        worst_partition = worst_partition.max((bank.partition_sum(t) - 1.0).abs());
    }
    // Derivative-ratio diagnostic over random band-limited fields.
    let window = Window::cube(2, -6.0, 6.0);
    let mut worst_bernstein = 0.0f64;
    for t in 0..trials {
        let f = make_bandlimited(2, 1.0 + (t % 3) as f64, 5, seed ^ t).map_err(numerical)?;
        for alpha in [[1usize, 0], [0, 1], [1, 1], [2, 0], [2, 1], [3, 0]] {
            let ratio =
                bernstein_check(&f, &alpha, &window, &cfg, seed ^ (t << 3)).map_err(numerical)?;
            worst_bernstein = worst_bernstein.max(ratio);
        }
    }
    write_json(
        &serde_json::json!({
            "schema_version": 1,
            "name": "filters",
            "seed": seed, "trials": trials,
            "max_partition_defect": worst_partition,
            "max_derivative_ratio": worst_bernstein,
        }),
        &format!("{out}.json"),
    )?;
    if worst_partition > 1e-10 {
        return Err(CliError::Numerical(format!(
            "partition defect {worst_partition:.3e} exceeds 1e-10"
        )));
    }
    if worst_bernstein > 1.001 {
        return Err(CliError::Numerical(format!(
            "derivative ratio {worst_bernstein} exceeds 1.001"
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = load_file_config(&cli.config)?;
    let jobs = cli.jobs.or(file.jobs);
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Validation("jobs must be positive".into()));
        }
        // Ignore failure if a global pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match &cli.command {
        Command::VerifyDoi(c) => {
            let r = resolve_common(c, &file, "verify-doi")?;
            run_verify_doi(&r)
        }
        Command::BuildMultipliers { common, window, max_level } => {
            let r = resolve_common(common, &file, "multipliers")?;
            let r = Resolved { n: pick(common.n, file.n, 2), ..r };
            run_build_multipliers(
                &r,
                pick(*window, file.window, 8.0),
                pick(*max_level, file.max_level, 4),
            )
        }
        Command::CubesStats { n, window, max_level, out } => run_cubes_stats(
            pick(*n, file.n, 1),
            pick(*window, file.window, 64.0) as i64,
            pick(*max_level, file.max_level, 6),
            &out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "cubes-stats".into()),
        ),
        Command::Lipschitz(c) => {
            let r = resolve_common(c, &file, "lipschitz")?;
            let report = lipschitz_experiment(r.n, r.dim, r.trials, r.sigma, r.seed)
                .map_err(experiment_err)?;
            write_report(&report, &r.out)
        }
        Command::Holder { common, alpha, mode } => {
            let r = resolve_common(common, &file, "holder")?;
            let alpha = pick(*alpha, file.alpha, 0.5);
            let mode_name = mode.clone().or_else(|| file.mode.clone()).unwrap_or_else(|| "power".into());
            let mode = match mode_name.as_str() {
                "power" => {
                    if !(alpha > 0.0 && alpha < 1.0) {
                        return Err(validation(format!("alpha = {alpha} outside (0, 1)")));
                    }
                    HolderMode::Power(alpha)
                }
                "log" => HolderMode::TruncatedLog,
                other => return Err(validation(format!("unknown holder mode '{other}'"))),
            };
            let report = holder_experiment(&mode, r.n, r.dim, r.trials, r.seed)
                .map_err(experiment_err)?;
            write_report(&report, &r.out)
        }
        Command::Schatten { common, alpha, p, mode } => {
            let r = resolve_common(common, &file, "schatten")?;
            let alpha = pick(*alpha, file.alpha, 0.5);
            let p = pick(*p, file.p, 2.0);
            let mode_name = mode.clone().or_else(|| file.mode.clone()).unwrap_or_else(|| "full".into());
            let mode = match mode_name.as_str() {
                "full" => SchattenHolderMode::Full { p, alpha },
                "partial" => SchattenHolderMode::PartialSums { p, alpha, m: 2 },
                "ideal" => SchattenHolderMode::IdealPower { q: p, alpha, weak: false },
                "weak-one" => SchattenHolderMode::WeakOne { alpha },
                "besov-one" => SchattenHolderMode::BesovOne { alpha },
                other => return Err(validation(format!("unknown schatten mode '{other}'"))),
            };
            let report = schatten_holder_experiment(&mode, r.n, r.dim, r.trials, r.seed)
                .map_err(experiment_err)?;
            write_report(&report, &r.out)
        }
        Command::Quasicommutator { common, alpha } => {
            let r = resolve_common(common, &file, "quasicommutator")?;
            let alpha = pick(*alpha, file.alpha, 0.5);
            let report = quasicommutator_experiment(r.n, r.dim, r.trials, alpha, r.seed)
                .map_err(experiment_err)?;
            write_report(&report, &r.out)
        }
        Command::Counterexample { sections, positive, out } => {
            let mut cx = CounterexampleConfig::default();
            if let Some(s) = sections.clone().or_else(|| file.sections.clone()) {
                cx.sections = s;
            }
            let out = out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "counterexample".into());
            let report = counterexample_d2f(&cx).map_err(experiment_err)?;
            write_report(&report, &out)?;
            if *positive {
                let pos = positive_multiplier_check_3d(&cx).map_err(experiment_err)?;
                write_report(&pos, &format!("{out}-positive"))?;
            }
            Ok(())
        }
        Command::Filters { seed, trials, out } => run_filters(
            pick(*seed, file.seed, DEFAULT_SEED),
            pick(*trials, file.trials, 10),
            &out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| "filters".into()),
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.code());
        }
    }
}
