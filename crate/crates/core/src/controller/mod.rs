//! Campaign orchestration.
//!
//! A campaign pairs one fuzzer with one subject for a bounded run: the
//! controller starts a validator service, drives the fuzzer (in-process for
//! builtin strategies, as a child process for external ones), shuts the
//! validator down, and reports how many records landed and at what rate.
//! [`run_many`] executes several campaigns with bounded parallelism, after
//! rejecting configs that would fight over a port or a log file.

mod config;

pub use config::{load_config, parse_config, CampaignConfig, FuzzerConfig, LOG_DIR_ENV};

use crate::generators::{build_generator, GeneratorError, GeneratorStrategy};
use crate::pkcs1::{KeyError, RsaKey};
use crate::subjects::run_subject;
use crate::validator::{send_input, serve, ValidatorHandle, CRASH_STATUS};
use serde::Serialize;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Drain allowance between stopping an external fuzzer and shutting down the
/// validator, so in-flight connections still land in the log.
const EXTERNAL_GRACE: Duration = Duration::from_secs(2);

/// Ceiling on how long the builtin loop waits for its latest record to be
/// flushed; generously above any plausible scheduling delay.
const RECORD_WAIT_TIMEOUT: Duration = Duration::from_secs(10);

/// Outcome of one campaign.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub campaign_id: String,
    pub records_written: u64,
    pub wall_seconds: f64,
    /// `records_written / wall_seconds`: inputs per second, valid or not.
    pub throughput: f64,
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),
    #[error("campaign {campaign_id}: invalid `{field}`: {msg}")]
    InvalidField {
        campaign_id: String,
        field: &'static str,
        msg: String,
    },
    #[error("duplicate campaign_id {0:?}")]
    DuplicateCampaignId(String),
    #[error("campaigns collide on shared resources: {0}")]
    Collisions(String),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("log file {0} already exists; campaigns never append to old logs")]
    LogExists(PathBuf),
    #[error("cannot prepare log directory for {path}: {source}")]
    LogDir {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("external fuzzer executable {0} does not exist")]
    ExternalFuzzerMissing(PathBuf),
    #[error("argument template references {{seed_dir}} but no seed_dir is configured")]
    SeedDirUnset,
    #[error("cannot read seed directory {path}: {source}")]
    SeedDirRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("seed directory {0} contains no files")]
    SeedDirEmpty(PathBuf),
    #[error("cannot load key {path}: {source}")]
    KeyRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse key {path}: {source}")]
    KeyParse { path: PathBuf, source: KeyError },
    #[error("no built-in key for mod_len {0}; set key_path")]
    NoBuiltinKey(usize),
    #[error("key modulus is {key} bytes but oracle mod_len is {oracle}")]
    KeyMismatch { key: usize, oracle: usize },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error("validator startup failed: {0}")]
    ValidatorStart(std::io::Error),
    #[error("sending input to validator failed: {0}")]
    Send(std::io::Error),
    #[error("validator did not flush a record within {}s", RECORD_WAIT_TIMEOUT.as_secs())]
    RecordWaitTimeout,
    #[error("cannot create scratch directory: {0}")]
    ScratchDir(std::io::Error),
    #[error("cannot spawn external fuzzer {program}: {source}")]
    Spawn {
        program: PathBuf,
        source: std::io::Error,
    },
    #[error("waiting on external fuzzer failed: {0}")]
    ChildWait(std::io::Error),
    #[error("campaign {campaign_id} failed: {source}")]
    CampaignFailed {
        campaign_id: String,
        source: Box<ControllerError>,
    },
}

/// Run one campaign to completion.
///
/// Everything fallible about the setup (key, seeds, fresh log, external
/// executable) is resolved before the validator starts, so failures never
/// leave a half-started campaign behind. Wall time spans validator launch to
/// validator shutdown.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignSummary, ControllerError> {
    let log_path = config.resolved_log_path();
    if log_path.exists() {
        return Err(ControllerError::LogExists(log_path));
    }
    if let Some(parent) = log_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| ControllerError::LogDir {
                path: log_path.clone(),
                source,
            })?;
        }
    }

    enum Plan {
        Builtin {
            strategy: GeneratorStrategy,
            mutation: crate::generators::MutationConfig,
            seeds: Vec<Vec<u8>>,
            key: RsaKey,
        },
        External {
            program: PathBuf,
            args: Vec<String>,
        },
    }

    let plan = match &config.fuzzer {
        FuzzerConfig::Builtin {
            strategy,
            mutation,
            inline_seeds,
        } => {
            let mut seeds = inline_seeds.clone();
            if let Some(dir) = &config.seed_dir {
                seeds.extend(read_seed_dir(dir, *strategy == GeneratorStrategy::Mutation)?);
            }
            Plan::Builtin {
                strategy: *strategy,
                mutation: *mutation,
                seeds,
                key: load_key(config)?,
            }
        }
        FuzzerConfig::External { program, args } => {
            if !program.exists() {
                return Err(ControllerError::ExternalFuzzerMissing(program.clone()));
            }
            Plan::External {
                program: program.clone(),
                args: args.clone(),
            }
        }
    };

    let started = Instant::now();
    let handle = serve(
        config.validator_port,
        config.oracle,
        &log_path,
        &config.campaign_id,
    )
    .map_err(ControllerError::ValidatorStart)?;

    let drive_result = match plan {
        Plan::Builtin {
            strategy,
            mutation,
            seeds,
            key,
        } => drive_builtin(config, strategy, mutation, seeds, &key, &handle),
        Plan::External { program, args } => drive_external(config, &program, &args, &handle),
    };

    let records_written = handle.shutdown();
    drive_result?;

    let wall_seconds = started.elapsed().as_secs_f64();
    Ok(CampaignSummary {
        campaign_id: config.campaign_id.clone(),
        records_written,
        wall_seconds,
        throughput: if wall_seconds > 0.0 {
            records_written as f64 / wall_seconds
        } else {
            0.0
        },
    })
}

/// Run several campaigns, at most `parallelism` at a time, returning
/// summaries in input order.
pub fn run_many(
    configs: &[CampaignConfig],
    parallelism: usize,
) -> Result<Vec<CampaignSummary>, ControllerError> {
    if parallelism == 0 {
        return Err(ControllerError::ZeroParallelism);
    }
    check_collisions(configs)?;

    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<Result<CampaignSummary, ControllerError>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(configs.len()) {
            scope.spawn(|| loop {
                let idx = {
                    let mut next = next.lock().unwrap();
                    let idx = *next;
                    *next += 1;
                    idx
                };
                let Some(config) = configs.get(idx) else {
                    break;
                };
                *results[idx].lock().unwrap() = Some(run_campaign(config));
            });
        }
    });

    let mut summaries = Vec::with_capacity(configs.len());
    for (config, cell) in configs.iter().zip(results) {
        match cell.into_inner().unwrap() {
            Some(Ok(summary)) => summaries.push(summary),
            Some(Err(source)) => {
                return Err(ControllerError::CampaignFailed {
                    campaign_id: config.campaign_id.clone(),
                    source: Box::new(source),
                })
            }
            None => unreachable!("every queued campaign ran"),
        }
    }
    Ok(summaries)
}

/// Reject configs sharing a campaign id, a fixed port, or a log file.
fn check_collisions(configs: &[CampaignConfig]) -> Result<(), ControllerError> {
    let mut by_id: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut by_port: HashMap<u16, Vec<&str>> = HashMap::new();
    let mut by_log: HashMap<PathBuf, Vec<&str>> = HashMap::new();
    for c in configs {
        by_id.entry(&c.campaign_id).or_default().push(&c.campaign_id);
        if c.validator_port != 0 {
            by_port
                .entry(c.validator_port)
                .or_default()
                .push(&c.campaign_id);
        }
        by_log
            .entry(c.resolved_log_path())
            .or_default()
            .push(&c.campaign_id);
    }

    let mut collisions = Vec::new();
    for (id, ids) in &by_id {
        if ids.len() > 1 {
            collisions.push(format!("campaign_id {id:?} used {} times", ids.len()));
        }
    }
    for (port, ids) in &by_port {
        if ids.len() > 1 {
            collisions.push(format!("port {port} shared by {}", ids.join(", ")));
        }
    }
    for (log, ids) in &by_log {
        if ids.len() > 1 {
            collisions.push(format!("log {} shared by {}", log.display(), ids.join(", ")));
        }
    }
    if collisions.is_empty() {
        Ok(())
    } else {
        collisions.sort();
        Err(ControllerError::Collisions(collisions.join("; ")))
    }
}

/// Generate, run the subject, and submit, until the count or time budget is
/// spent. Submissions are paced against the validator's record counter so
/// the log order matches generation order and the writer never backs up.
fn drive_builtin(
    config: &CampaignConfig,
    strategy: GeneratorStrategy,
    mutation: crate::generators::MutationConfig,
    seeds: Vec<Vec<u8>>,
    key: &RsaKey,
    handle: &ValidatorHandle,
) -> Result<(), ControllerError> {
    let mut generator = build_generator(strategy, config.oracle, seeds, mutation, config.rng_seed)?;
    let addr = handle.local_addr();
    let deadline = Instant::now() + config.duration;
    let mut sent: u64 = 0;
    loop {
        let budget_left = match config.max_inputs {
            Some(max) => sent < max,
            None => Instant::now() < deadline,
        };
        if !budget_left {
            return Ok(());
        }
        let em = generator.next().expect("generators are infinite");
        let outcome = run_subject(&em, config.subject, key, &config.oracle);
        let status = outcome.crashed.then_some(CRASH_STATUS);
        send_input(addr, &em, status).map_err(ControllerError::Send)?;
        sent += 1;
        wait_for_records(handle, sent)?;
    }
}

fn wait_for_records(handle: &ValidatorHandle, target: u64) -> Result<(), ControllerError> {
    let start = Instant::now();
    let mut spins = 0u32;
    while handle.record_count() < target {
        if start.elapsed() > RECORD_WAIT_TIMEOUT {
            return Err(ControllerError::RecordWaitTimeout);
        }
        spins += 1;
        if spins < 100 {
            std::thread::yield_now();
        } else {
            std::thread::sleep(Duration::from_micros(200));
        }
    }
    Ok(())
}

/// Spawn the external fuzzer with the template substituted, kill it when the
/// duration elapses (or reap it earlier if it exits on its own), then leave
/// a grace window for in-flight connections.
fn drive_external(
    config: &CampaignConfig,
    program: &Path,
    args: &[String],
    handle: &ValidatorHandle,
) -> Result<(), ControllerError> {
    let scratch = tempfile::Builder::new()
        .prefix(&format!("fuzzeval-{}-", config.campaign_id))
        .tempdir()
        .map_err(ControllerError::ScratchDir)?;

    let seed_dir = config.seed_dir.as_ref().map(|d| d.display().to_string());
    let mut resolved = Vec::with_capacity(args.len());
    for arg in args {
        let mut arg = arg.replace("{port}", &handle.port().to_string());
        arg = arg.replace("{out_dir}", &scratch.path().display().to_string());
        if arg.contains("{seed_dir}") {
            let dir = seed_dir.as_deref().ok_or(ControllerError::SeedDirUnset)?;
            arg = arg.replace("{seed_dir}", dir);
        }
        resolved.push(arg);
    }

    let mut child = Command::new(program)
        .args(&resolved)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|source| ControllerError::Spawn {
            program: program.to_path_buf(),
            source,
        })?;

    let deadline = Instant::now() + config.duration;
    loop {
        match child.try_wait().map_err(ControllerError::ChildWait)? {
            Some(_) => break,
            None if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                break;
            }
            None => std::thread::sleep(Duration::from_millis(20)),
        }
    }
    std::thread::sleep(EXTERNAL_GRACE);
    Ok(())
}

/// Seed corpus from a directory: every regular file, in filename order.
fn read_seed_dir(dir: &Path, required: bool) -> Result<Vec<Vec<u8>>, ControllerError> {
    let to_err = |source| ControllerError::SeedDirRead {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(to_err)? {
        let path = entry.map_err(to_err)?.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    if required && paths.is_empty() {
        return Err(ControllerError::SeedDirEmpty(dir.to_path_buf()));
    }
    paths
        .into_iter()
        .map(|p| std::fs::read(&p).map_err(to_err))
        .collect()
}

/// Subject signing key: `key_path` when set, else the bundled key matching
/// the oracle's modulus length.
fn load_key(config: &CampaignConfig) -> Result<RsaKey, ControllerError> {
    let key = match &config.key_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ControllerError::KeyRead {
                path: path.clone(),
                source,
            })?;
            RsaKey::from_text(&text).map_err(|source| ControllerError::KeyParse {
                path: path.clone(),
                source,
            })?
        }
        None => match config.oracle.mod_len {
            256 => RsaKey::default_2048().clone(),
            12 => RsaKey::demo_12().clone(),
            n => return Err(ControllerError::NoBuiltinKey(n)),
        },
    };
    if key.mod_len() != config.oracle.mod_len {
        return Err(ControllerError::KeyMismatch {
            key: key.mod_len(),
            oracle: config.oracle.mod_len,
        });
    }
    Ok(key)
}
