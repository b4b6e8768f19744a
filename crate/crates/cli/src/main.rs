//! Command-line front end for the evaluation platform.
//!
//! Four subcommands, each a thin wrapper over the library:
//!
//! * `serve`: run a standalone validator service until interrupted;
//! * `run`: execute the campaigns described by a TOML config;
//! * `generate`: write generator outputs to files, one input per file;
//! * `analyze`: compute metrics from campaign logs and print a headline
//!   table.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags), 2 for runtime
//! failures (busy port, bad config, unreadable log).

use anyhow::Context;
use clap::{Parser, Subcommand};
use fuzzeval::analyzer::{
    analyze_logs, write_csv, write_json, write_series_tsv, AggregateStat, AnalyzeOptions,
    MetricsReport, DEFAULT_BUCKET_SECONDS,
};
use fuzzeval::controller::{load_config, run_many};
use fuzzeval::generators::{build_generator, GeneratorStrategy, MutationConfig};
use fuzzeval::validator::serve;
use fuzzeval::OracleParams;
use std::fs::File;
use std::io::BufWriter;
use std::num::NonZeroU64;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "fuzzeval",
    version,
    about = "Evaluate input generators against a PKCS#1 v1.5 padding oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a validator service until interrupted (SIGINT/SIGTERM).
    Serve {
        /// Port to listen on; 0 picks a free one (printed on startup).
        #[arg(long)]
        port: u16,
        /// Modulus length in bytes the oracle checks against.
        #[arg(long, default_value_t = 256)]
        mod_len: usize,
        /// JSONL log file; created if missing, appended to otherwise.
        #[arg(long)]
        log: PathBuf,
        /// Campaign id stamped into every record.
        #[arg(long, default_value = "serve")]
        campaign_id: String,
    },
    /// Execute the campaigns in a TOML config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// How many campaigns may run concurrently.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Write generator outputs to numbered files.
    Generate {
        /// constraint_aware, context_free, or mutation.
        #[arg(long, value_parser = parse_strategy)]
        strategy: GeneratorStrategy,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 256)]
        mod_len: usize,
        /// Seed corpus directory (required by the mutation strategy).
        #[arg(long)]
        seed_dir: Option<PathBuf>,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Skip the deterministic sweep and start in the havoc stage.
        #[arg(long)]
        no_deterministic: bool,
    },
    /// Compute metrics from one or more campaign logs.
    Analyze {
        /// Log files, one campaign each.
        #[arg(long, num_args = 1.., required = true)]
        logs: Vec<PathBuf>,
        /// Diversity sample size per repetition.
        #[arg(long, default_value_t = 100)]
        sample: usize,
        /// Diversity repetitions.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Validity-series bucket width in seconds.
        #[arg(long, default_value_t = DEFAULT_BUCKET_SECONDS)]
        bucket: NonZeroU64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Write the full report as pretty-printed JSON.
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Write the report as campaign,metric,value CSV rows.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Write the validity series as gnuplot-ready TSV blocks.
        #[arg(long)]
        out_series: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<GeneratorStrategy, String> {
    match s {
        "constraint_aware" => Ok(GeneratorStrategy::ConstraintAware),
        "context_free" => Ok(GeneratorStrategy::ContextFree),
        "mutation" => Ok(GeneratorStrategy::Mutation),
        _ => Err(format!(
            "unknown strategy `{s}` (expected constraint_aware, context_free, or mutation)"
        )),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; they are not errors.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve {
            port,
            mod_len,
            log,
            campaign_id,
        } => cmd_serve(port, mod_len, &log, &campaign_id),
        Command::Run {
            config,
            parallelism,
        } => cmd_run(&config, parallelism),
        Command::Generate {
            strategy,
            count,
            mod_len,
            seed_dir,
            out,
            rng_seed,
            no_deterministic,
        } => cmd_generate(
            strategy,
            count,
            mod_len,
            seed_dir.as_deref(),
            &out,
            rng_seed,
            no_deterministic,
        ),
        Command::Analyze {
            logs,
            sample,
            reps,
            bucket,
            rng_seed,
            out_json,
            out_csv,
            out_series,
        } => cmd_analyze(
            &logs,
            AnalyzeOptions {
                bucket_seconds: bucket,
                sample_size: sample,
                repetitions: reps,
                rng_seed,
            },
            out_json.as_deref(),
            out_csv.as_deref(),
            out_series.as_deref(),
        ),
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn note_interrupt(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_interrupt_handler() {
    let handler = note_interrupt as extern "C" fn(libc::c_int) as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

fn cmd_serve(port: u16, mod_len: usize, log: &std::path::Path, campaign_id: &str) -> anyhow::Result<()> {
    let params = OracleParams::new(mod_len)?;
    install_interrupt_handler();
    let handle = serve(port, params, log, campaign_id)
        .with_context(|| format!("cannot serve on 127.0.0.1:{port}"))?;
    println!("listening on 127.0.0.1:{}", handle.port());
    // Informational lines are best-effort: a consumer that closed our
    // stdout after the banner must not crash the service.
    use std::io::Write as _;
    let _ = writeln!(std::io::stdout(), "logging to {}", log.display());
    while !INTERRUPTED.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(25));
    }
    let written = handle.shutdown();
    let _ = writeln!(std::io::stdout(), "shut down after {written} records");
    Ok(())
}

fn cmd_run(config: &std::path::Path, parallelism: usize) -> anyhow::Result<()> {
    let configs = load_config(config)?;
    let summaries = run_many(&configs, parallelism)?;
    for (summary, config) in summaries.iter().zip(&configs) {
        println!(
            "campaign {}: {} records in {:.2} s ({:.2} inputs/s), log {}",
            summary.campaign_id,
            summary.records_written,
            summary.wall_seconds,
            summary.throughput,
            config.resolved_log_path().display()
        );
    }
    Ok(())
}

fn cmd_generate(
    strategy: GeneratorStrategy,
    count: u64,
    mod_len: usize,
    seed_dir: Option<&std::path::Path>,
    out: &std::path::Path,
    rng_seed: u64,
    no_deterministic: bool,
) -> anyhow::Result<()> {
    let params = OracleParams::new(mod_len)?;
    let seeds = match seed_dir {
        Some(dir) => read_seed_files(dir)?,
        None => Vec::new(),
    };
    let mutation = MutationConfig {
        skip_deterministic: no_deterministic,
        ..MutationConfig::default()
    };
    let mut generator = build_generator(strategy, params, seeds, mutation, rng_seed)?;
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    for i in 0..count {
        let input = generator.next().expect("generators never run dry");
        let path = out.join(format!("{i:06}.bin"));
        std::fs::write(&path, &input)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!("wrote {count} inputs to {}", out.display());
    Ok(())
}

fn read_seed_files(dir: &std::path::Path) -> anyhow::Result<Vec<Vec<u8>>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read seed directory {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut seeds = Vec::with_capacity(paths.len());
    for path in paths {
        seeds.push(
            std::fs::read(&path).with_context(|| format!("cannot read seed {}", path.display()))?,
        );
    }
    Ok(seeds)
}

fn cmd_analyze(
    logs: &[PathBuf],
    options: AnalyzeOptions,
    out_json: Option<&std::path::Path>,
    out_csv: Option<&std::path::Path>,
    out_series: Option<&std::path::Path>,
) -> anyhow::Result<()> {
    let report = analyze_logs(logs, &options)?;
    print_headline(&report);
    if let Some(path) = out_json {
        let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_json(&report, BufWriter::new(file))?;
    }
    if let Some(path) = out_csv {
        let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_csv(&report, BufWriter::new(file))?;
    }
    if let Some(path) = out_series {
        let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_series_tsv(&report, BufWriter::new(file))?;
    }
    Ok(())
}

/// Per-campaign rows plus an aggregate row printed as `mean (stddev)`.
fn print_headline(report: &MetricsReport) {
    println!(
        "{:<24} {:>8} {:>16} {:>16} {:>16} {:>16} {:>8}",
        "campaign", "records", "valid%", "inputs/s", "editdist", "nlcs", "crashes"
    );
    for c in &report.campaigns {
        let (edit, nlcs) = match &c.diversity {
            Some(d) => (format!("{:.2}", d.edit_dist_mean), format!("{:.4}", d.nlcs_mean)),
            None => ("-".to_string(), "-".to_string()),
        };
        println!(
            "{:<24} {:>8} {:>16} {:>16} {:>16} {:>16} {:>8}",
            c.campaign_id,
            c.records,
            format!("{:.2}", c.valid_percent),
            format!("{:.2}", c.throughput),
            edit,
            nlcs,
            c.crashes
        );
    }
    let cell = |name: &str, decimals: usize| -> String {
        match report.aggregate.get(name) {
            Some(AggregateStat { mean, stddev }) => {
                format!("{mean:.decimals$} ({stddev:.decimals$})")
            }
            None => "-".to_string(),
        }
    };
    println!(
        "{:<24} {:>8} {:>16} {:>16} {:>16} {:>16} {:>8}",
        "aggregate",
        "-",
        cell("valid_percent", 2),
        cell("throughput", 2),
        cell("edit_dist_mean", 2),
        cell("nlcs_mean", 4),
        "-"
    );
}
