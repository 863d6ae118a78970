use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rlhf_bilevel::bilevel::train_with;
use rlhf_bilevel::certify::{verify, Faults, VerifyLevel};
use rlhf_bilevel::metrics::MetricsWriter;
use rlhf_bilevel::models::Checkpoint;
use rlhf_bilevel::Error;

use crate::config::ExperimentConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_BAD_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const THREADS_VAR: &str = "RLHF_BILEVEL_THREADS";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// Test hook for the mid-run failure path.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunFaults {
    /// Fail with a numeric error right after writing row `t`.
    pub fail_after_row: Option<usize>,
}

/// Trains one configuration into `out`. Errors before the first row are
/// configuration errors; errors after it are runtime failures.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, faults: RunFaults) -> std::result::Result<(), (u8, Error)> {
    let bad_config = |e: Error| (EXIT_BAD_CONFIG, e);
    let mdp = cfg.env.build(cfg.train.seed).map_err(bad_config)?;
    std::fs::create_dir_all(out).map_err(|e| bad_config(io_err(out, e)))?;
    let echo = out.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&echo, cfg.to_dotted_toml()).map_err(|e| bad_config(io_err(&echo, e)))?;

    let metrics_path = out.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| bad_config(io_err(&metrics_path, e)))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file)).map_err(bad_config)?;
    writer.flush().map_err(bad_config)?;
    let result = train_with(&mdp, &cfg.train, |r| {
        writer.write(r)?;
        writer.flush()?;
        if faults.fail_after_row == Some(r.t) {
            return Err(Error::Numeric(format!("injected failure after row {}", r.t)));
        }
        Ok(())
    });
    writer.flush().map_err(|e| (EXIT_NUMERIC, e))?;
    let trained = result.map_err(|e| match e {
        Error::Config(_) | Error::Usage(_) => (EXIT_BAD_CONFIG, e),
        _ => (EXIT_NUMERIC, e),
    })?;

    let checkpoints = [
        ("reward.toml", Checkpoint::from(&trained.reward)),
        ("policy_plain.toml", Checkpoint::from(&trained.plain.policy)),
        ("critic_plain.toml", Checkpoint::from(&trained.plain.critic)),
        ("policy_penalized.toml", Checkpoint::from(&trained.penalized.policy)),
        ("critic_penalized.toml", Checkpoint::from(&trained.penalized.critic)),
    ];
    for (name, ckpt) in checkpoints {
        ckpt.save(out.join(name)).map_err(|e| (EXIT_NUMERIC, e))?;
    }
    Ok(())
}

pub fn cmd_run(config: &Path, out: &Path, faults: RunFaults) -> u8 {
    let cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config {}: {e}", config.display());
            return EXIT_BAD_CONFIG;
        }
    };
    match run_experiment(&cfg, out, faults) {
        Ok(()) => EXIT_OK,
        Err((code, e)) => {
            eprintln!("run failed: {e}");
            code
        }
    }
}

pub fn cmd_verify(level: VerifyLevel, faults: Faults) -> u8 {
    let report = verify(level, faults);
    print!("{report}");
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        EXIT_OK
    } else {
        let failing: Vec<_> = report.failures().map(|c| c.name).collect();
        eprintln!("failing checks: {}", failing.join(", "));
        EXIT_VERIFY_FAILED
    }
}

/// Parses `a..b`, inclusive of both ends.
pub fn parse_seed_range(text: &str) -> std::result::Result<Vec<u64>, String> {
    let (a, b) = text.split_once("..").ok_or_else(|| format!("expected a..b, got {text:?}"))?;
    let parse = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad seed {s:?}: {e}"));
    let (a, b) = (parse(a)?, parse(b)?);
    if a > b {
        return Err(format!("empty seed range {text:?}"));
    }
    Ok((a..=b).collect())
}

/// Worker count for sweeps: `RLHF_BILEVEL_THREADS` when set, else the
/// available parallelism.
pub fn sweep_threads() -> std::result::Result<usize, String> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("{THREADS_VAR} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Runs the config once per seed into `out/seed_<s>`; the exit code is the
/// largest of the individual runs.
pub fn cmd_sweep(config: &Path, seeds: &[u64], out: &Path) -> u8 {
    let cfg = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config {}: {e}", config.display());
            return EXIT_BAD_CONFIG;
        }
    };
    let threads = match sweep_threads() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_BAD_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {e}");
            return EXIT_NUMERIC;
        }
    };
    let codes: Vec<u8> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.train.seed = seed;
                match run_experiment(&c, &seed_dir(out, seed), RunFaults::default()) {
                    Ok(()) => EXIT_OK,
                    Err((code, e)) => {
                        eprintln!("seed {seed} failed: {e}");
                        code
                    }
                }
            })
            .collect()
    });
    codes.into_iter().max().unwrap_or(EXIT_OK)
}
