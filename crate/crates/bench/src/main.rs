use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use turbocs_bench::config::{parse_list, read_key_values, snr_grid};
use turbocs_bench::emit::{emit, Format};
use turbocs_bench::verify::{run_suite, SuiteConfig};
use turbocs_bench::{run_sweep, BenchError, SweepConfig, SweepResult};
use turbocs_core::matrices::MatrixKind;
use turbocs_core::recover::Algorithm;

#[derive(Parser)]
#[command(name = "turbocs", version, about = "Turbo sparse recovery: SER sweeps and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo symbol-error-rate sweep over an SNR grid.
    Sweep(SweepArgs),
    /// Numerical checks of the identity, unbiasing and variance tracking.
    Verify(VerifyArgs),
    /// Both panels of the reference experiment (partial-orthogonal and
    /// Gaussian matrices).
    PaperFig2(Fig2Args),
}

#[derive(Args)]
struct SweepArgs {
    /// `key = value` file; keys are the long flag names without dashes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of tms,tsr,iht,sft,bamp.
    #[arg(long)]
    algo: Option<String>,
    /// ortho or gauss.
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long = "L")]
    len: Option<usize>,
    #[arg(long = "K")]
    rows: Option<usize>,
    #[arg(long = "s")]
    sparsity: Option<usize>,
    /// Nonzero symbols, e.g. "-1,1".
    #[arg(long, allow_hyphen_values = true)]
    alphabet: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    snr_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_stop: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr_step: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Draw a new matrix for every trial (default true).
    #[arg(long)]
    redraw: Option<bool>,
    /// Output path; the extension is replaced per format.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long)]
    format: Option<String>,
    /// Record wall-clock time per cell (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Fig2Args {
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
    GateFailed,
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) | BenchError::Core(turbocs_core::Error::InvalidConfig(_)) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Flag value if given, else the config-file value, parsed.
fn pick<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    match (flag, file.get(key)) {
        (Some(v), _) => Ok(Some(v)),
        (None, Some(raw)) => raw
            .parse()
            .map(Some)
            .map_err(|e| Failure::Usage(format!("config key {key}: {e}"))),
        (None, None) => Ok(None),
    }
}

const FILE_KEYS: [&str; 17] = [
    "algo", "matrix", "L", "K", "s", "alphabet", "snr-start", "snr-stop", "snr-step", "trials",
    "iters", "seed", "workers", "redraw", "out", "format", "timing",
];

fn sweep_config(args: SweepArgs) -> Result<(SweepConfig, PathBuf, Format), Failure> {
    let file = match &args.config {
        Some(p) => read_key_values(p)?,
        None => BTreeMap::new(),
    };
    if let Some(k) = file.keys().find(|k| !FILE_KEYS.contains(&k.as_str())) {
        return Err(Failure::Usage(format!("unknown config key {k:?}")));
    }
    let usage = |e: turbocs_core::Error| Failure::Usage(e.to_string());
    let mut cfg = SweepConfig {
        workers: default_workers(),
        ..SweepConfig::default()
    };
    if let Some(a) = pick(args.algo, &file, "algo")? {
        cfg.algorithms = parse_list::<Algorithm>(&a).map_err(usage)?;
    }
    if let Some(m) = pick(args.matrix, &file, "matrix")? {
        cfg.matrix_kind = MatrixKind::from_str(&m).map_err(usage)?;
    }
    cfg.len = pick(args.len, &file, "L")?.unwrap_or(cfg.len);
    cfg.rows = pick(args.rows, &file, "K")?.unwrap_or(cfg.rows);
    cfg.sparsity = pick(args.sparsity, &file, "s")?.unwrap_or(cfg.sparsity);
    if let Some(a) = pick(args.alphabet, &file, "alphabet")? {
        cfg.alphabet =
            parse_list::<f64>(&a).map_err(|e| Failure::Usage(format!("alphabet: {e}")))?;
    }
    let start = pick(args.snr_start, &file, "snr-start")?.unwrap_or(9.0);
    let stop = pick(args.snr_stop, &file, "snr-stop")?.unwrap_or(15.0);
    let step = pick(args.snr_step, &file, "snr-step")?.unwrap_or(0.5);
    cfg.snr_db_grid = snr_grid(start, stop, step)?;
    cfg.trials_per_point = pick(args.trials, &file, "trials")?.unwrap_or(cfg.trials_per_point);
    cfg.max_iters = pick(args.iters, &file, "iters")?.unwrap_or(cfg.max_iters);
    cfg.master_seed = pick(args.seed, &file, "seed")?.unwrap_or(cfg.master_seed);
    cfg.workers = pick(args.workers, &file, "workers")?.unwrap_or(cfg.workers);
    cfg.redraw_matrix_per_trial =
        pick(args.redraw, &file, "redraw")?.unwrap_or(cfg.redraw_matrix_per_trial);
    cfg.timing = args.timing || pick(None, &file, "timing")?.unwrap_or(false);
    let out = pick(args.out, &file, "out")?.unwrap_or_else(|| PathBuf::from("sweep"));
    let format = match pick(args.format, &file, "format")? {
        Some(f) => f.parse()?,
        None => Format::Csv,
    };
    cfg.validate()?;
    Ok((cfg, out, format))
}

fn print_summary(result: &SweepResult) {
    println!("{:<6} {:>7} {:>12} {:>12} {:>8}", "algo", "snr_db", "ser", "ci_hi", "trials");
    for c in &result.cells {
        println!(
            "{:<6} {:>7.2} {:>12.4e} {:>12.4e} {:>8}",
            c.algorithm.name(),
            c.snr_db,
            c.ser,
            c.ci_hi,
            c.trials
        );
    }
}

fn write(result: &SweepResult, format: Format, out: &Path) -> Result<(), Failure> {
    for p in emit(result, format, out).map_err(|e| Failure::Runtime(e.to_string()))? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let (cfg, out, format) = sweep_config(args)?;
    let result = run_sweep(&cfg)?;
    print_summary(&result);
    write(&result, format, &out)
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let cfg = SuiteConfig {
        seed: args.seed,
        mc_samples: args.mc_samples,
        ..SuiteConfig::default()
    };
    let report = run_suite(&cfg)?;
    for g in &report.gates {
        eprintln!(
            "{} {}: {:.3e} (< {:e})",
            if g.passed { "PASS" } else { "FAIL" },
            g.name,
            g.value,
            g.threshold
        );
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    match args.out {
        Some(p) => std::fs::write(&p, json + "\n").map_err(|e| Failure::Runtime(e.to_string()))?,
        None => println!("{json}"),
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::GateFailed)
    }
}

fn paper_fig2(args: Fig2Args) -> Result<(), Failure> {
    for (kind, name) in [
        (MatrixKind::PartialOrthogonal, "fig2_ortho"),
        (MatrixKind::GeneralDense, "fig2_gauss"),
    ] {
        let cfg = SweepConfig {
            matrix_kind: kind,
            trials_per_point: args.trials,
            master_seed: args.seed,
            max_iters: args.iters,
            workers: args.workers.unwrap_or_else(default_workers),
            algorithms: Algorithm::ALL.to_vec(),
            ..SweepConfig::default()
        };
        let result = run_sweep(&cfg)?;
        println!("# {name}");
        print_summary(&result);
        write(&result, Format::Csv, &args.out_dir.join(name))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::PaperFig2(a) => paper_fig2(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `turbocs --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::GateFailed) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
    }
}
