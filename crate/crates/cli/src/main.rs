use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmes::sim::{run_seek, LightField, Preset, Scenario, SeekConfig};
use gmes::testbed::run_experiment;
use gmes_cli::config::{parse_config, ConfigError, SweepSpec};
use gmes_cli::sweep::{final_regret, run_sweep, write_atomic};
use serde::Deserialize;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "gmes", version, about = "Multi-agent Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell × seed of a sweep config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Run the first cell with the first seed and print the final instant regret.
    Bench {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Run one source-seeking simulation (preset name or scenario file).
    Seek {
        scenario: String,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Parse and validate a config, printing the resolved spec as JSON.
    Validate { config: PathBuf },
}

/// Scenario file: the scenario itself plus optional `[config]` overrides.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    field: LightField,
    starts: Vec<[f64; 2]>,
    config: Option<SeekConfig>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load(config: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<SweepSpec, Failure> {
    let mut spec = parse_config(config)?;
    if let Some(out) = out {
        spec.output_dir = out;
    }
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Failure::Config("--jobs must be >= 1".into()));
        }
        spec.jobs = j;
    }
    Ok(spec)
}

fn load_scenario(arg: &str) -> Result<(Scenario, SeekConfig), Failure> {
    if let Ok(p) = arg.parse::<Preset>() {
        return Ok((p.scenario(), SeekConfig::default()));
    }
    let text = std::fs::read_to_string(arg)
        .map_err(|e| Failure::Config(format!("`{arg}` is neither a preset (single, sparse, dense) nor a readable file: {e}")))?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| Failure::Config(format!("{arg}: {e}")))?;
    let scenario = Scenario {
        name: file.name,
        field: file.field,
        starts: file.starts,
    };
    Ok((scenario, file.config.unwrap_or_default()))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { config } => {
            let spec = parse_config(&config)?;
            println!("{}", spec.to_json());
        }
        Command::Run {
            config,
            out,
            jobs,
            seed_offset,
        } => {
            let spec = load(&config, out, jobs)?;
            let report = run_sweep(&spec, seed_offset).map_err(|e| Failure::Runtime(e.to_string()))?;
            println!(
                "{} runs completed, {} failed; results in {}",
                report.completed,
                report.failures.len(),
                spec.output_dir.display()
            );
            if !report.failures.is_empty() {
                for f in &report.failures {
                    eprintln!("failed: {}: {}", f.run, f.error);
                }
                return Err(Failure::Runtime("some runs failed (see failures.json)".into()));
            }
        }
        Command::Bench {
            config,
            out,
            seed_offset,
        } => {
            let spec = load(&config, None, None)?;
            let Some(e) = spec.experiments.first() else {
                return Err(Failure::Config("bench needs at least one experiment".into()));
            };
            let seed = spec.seeds[0].wrapping_add(seed_offset);
            let outcome = run_experiment(e, seed).map_err(|err| Failure::Runtime(err.to_string()))?;
            if let Some(dir) = out {
                let path = dir.join(format!("bench_{}_{}_m{}_seed{seed}.csv", e.algorithm, e.function, e.agents));
                write_atomic(&path, outcome.trace.to_csv().as_bytes()).map_err(|err| Failure::Runtime(err.to_string()))?;
            }
            let r = final_regret(&outcome.trace).unwrap_or(f64::NAN);
            println!("{} {} m={} seed={seed}: final R_T = {r}", e.algorithm, e.function, e.agents);
        }
        Command::Seek {
            scenario,
            agents,
            seed,
            out,
            seed_offset,
        } => {
            let (scenario, mut cfg) = load_scenario(&scenario)?;
            if let Some(m) = agents {
                cfg.agents = m;
            }
            let problems = cfg.validate();
            if !problems.is_empty() {
                return Err(Failure::Config(problems.join("; ")));
            }
            let seed = seed.wrapping_add(seed_offset);
            let result = run_seek(&scenario, &cfg, seed).map_err(|e| match e {
                gmes::Error::InvalidConfig(msg) => Failure::Config(msg),
                other => Failure::Runtime(other.to_string()),
            })?;
            let dir = out.unwrap_or_else(|| PathBuf::from("seek_out"));
            let stem = format!("{}_m{}_seed{seed}", scenario.name, cfg.agents);
            let json = serde_json::to_string_pretty(&result).expect("seek result serializes");
            write_atomic(&dir.join(format!("{stem}_trajectory.csv")), result.trajectory_csv().as_bytes())
                .and_then(|_| write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes()))
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            println!(
                "{} m={} seed={seed}: converged={} iterations={} sim_time={:.1}s",
                scenario.name, cfg.agents, result.converged, result.iterations_to_converge, result.sim_time_s
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
