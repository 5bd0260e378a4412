use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mpsdoe::analytics::{mig_exact, mig_greedy};
use mpsdoe::conditions::{check_all, DEFAULT_DEPTH};
use mpsdoe::harness::catalog::{catalog_environment, EnvOverrides, CATALOG};
use mpsdoe::harness::config::{CampaignConfig, EnvironmentConfig};
use mpsdoe::harness::run::{campaign_environment, run_campaign_on};
use mpsdoe::harness::verify::{run_suite, suite_names, SUITES};
use mpsdoe::{Environment, Error};

#[derive(Parser)]
#[command(name = "mpsdoe", version, about = "Sequential experiment design with myopic posterior sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded campaign and write trace.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replaces the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Replaces the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustively check the structural conditions on a finite environment.
    CheckConditions {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: usize,
        /// Window for the episodic check.
        #[arg(long, default_value_t = 1)]
        window: usize,
        /// Longest oracle rollout for the more-data-is-better check.
        #[arg(long, default_value_t = 2)]
        rollout: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum information gain of a finite environment.
    Mig {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = MigChoice::Auto)]
        method: MigChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites; exits non-zero when any fails.
    Verify {
        /// Suites to run (default: all). Known: prop1, thompson, theorem1, decomposition,
        /// mig, conditions, greedy, experiments, exp1, exp2, determinism.
        #[arg(long = "suite")]
        suites: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List catalog environments.
    Catalog,
}

#[derive(clap::Args)]
struct EnvArgs {
    /// TOML file with an `[environment]` table.
    #[arg(long, conflicts_with = "env")]
    config: Option<PathBuf>,
    /// Catalog id (default overrides).
    #[arg(long)]
    env: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MigChoice {
    Auto,
    Exact,
    Greedy,
}

#[derive(Deserialize)]
struct EnvFile {
    environment: EnvironmentConfig,
}

impl EnvArgs {
    fn environment(&self) -> Result<Environment, Error> {
        match (&self.config, &self.env) {
            (Some(path), _) => {
                let file: EnvFile = toml::from_str(&fs::read_to_string(path)?)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
                catalog_environment(&file.environment.id, &file.environment.overrides)
            }
            (None, Some(id)) => catalog_environment(id, &EnvOverrides::default()),
            (None, None) => Err(Error::InvalidConfig("pass --config or --env".into())),
        }
    }
}

fn write_json(dir: Option<&Path>, name: &str, text: &str) -> Result<(), Error> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let mut cfg = CampaignConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            let env = campaign_environment(&cfg)?;
            let res = run_campaign_on(&cfg, &env)?;
            let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            res.write(&dir)?;
            if cfg.emit.condition_reports && env.finite().is_some() {
                let reports = check_all(&env, DEFAULT_DEPTH, 1, 2)?;
                write_json(Some(&dir), "conditions.json", &serde_json::to_string_pretty(&reports)?)?;
            }
            for p in &res.summary.policies {
                if let Some(last) = p.cells.last() {
                    println!(
                        "{:<16} runs {:>5}  final {:.4} +/- {:.4}  cumulative {:.4} +/- {:.4}",
                        p.policy, p.runs, last.penalty_mean, last.penalty_stderr, last.cum_mean, last.cum_stderr
                    );
                }
            }
            for f in &res.failures {
                eprintln!("failed: {} ({})", f.run_id, f.error);
            }
            println!("wrote {}", dir.display());
            Ok(res.failures.is_empty())
        }
        Command::CheckConditions {
            env,
            depth,
            window,
            rollout,
            out,
        } => {
            let env = env.environment()?;
            let reports = check_all(&env, depth, window, rollout)?;
            let text = serde_json::to_string_pretty(&reports)?;
            println!("{text}");
            write_json(out.as_deref(), "conditions.json", &text)?;
            Ok(true)
        }
        Command::Mig { env, n, method, out } => {
            let env = env.environment()?;
            let report = match method {
                MigChoice::Exact => mig_exact(&env, n)?,
                MigChoice::Greedy => mig_greedy(&env, n)?,
                MigChoice::Auto => match mig_exact(&env, n) {
                    Err(Error::EnumerationBound { .. }) => mig_greedy(&env, n)?,
                    other => other?,
                },
            };
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            write_json(out.as_deref(), "mig.json", &text)?;
            Ok(true)
        }
        Command::Verify { suites, out } => {
            let names: Vec<String> = if suites.is_empty() {
                SUITES.iter().map(|s| s.0.to_string()).collect()
            } else {
                suites
            };
            let mut outcomes = Vec::new();
            for name in &names {
                let Some(o) = run_suite(name) else {
                    return Err(Error::InvalidConfig(format!(
                        "unknown suite `{name}` (known: {})",
                        suite_names().join(", ")
                    )));
                };
                println!("{} {}: {} [{:.1}s]", if o.passed { "PASS" } else { "FAIL" }, o.suite, o.detail, o.seconds);
                outcomes.push(o);
            }
            write_json(out.as_deref(), "verify.json", &serde_json::to_string_pretty(&outcomes)?)?;
            Ok(outcomes.iter().all(|o| o.passed))
        }
        Command::Catalog => {
            for (id, about) in CATALOG {
                println!("{id:<14} {about}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
