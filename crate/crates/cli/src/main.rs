//! `forel`: config-driven runner for the learning dynamics in `forel-core`.

mod config;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use config::{merge, read_config_file, ConfigError, GameSelector, Overrides, RawConfig, RunConfig};
use runner::{load_game, run_experiment, Failure};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "forel", version, about = "Run FoReL dynamics, reward transforms and anchoring on tabular games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its CSV.
    Run {
        /// key=value config file; flags override its entries.
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one experiment per value of a key, in parallel, each to its own CSV.
    Sweep {
        config: Option<PathBuf>,
        /// Key to vary.
        #[arg(long = "param", value_name = "KEY")]
        param: String,
        /// Comma-separated values for the key.
        #[arg(long = "values", value_name = "V1,V2,...", value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long = "jobs")]
        jobs: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a game's structure and print its size.
    ValidateGame {
        /// kuhn, leduc, matrix:<path> or polymatrix:<path>
        game: String,
    },
}

fn base_config(config: Option<&Path>, overrides: &Overrides) -> Result<RawConfig, ConfigError> {
    let raw = match config {
        Some(p) => read_config_file(p)?,
        None => RawConfig::new(),
    };
    merge(raw, overrides.pairs())
}

fn report(failure: &Failure) -> u8 {
    eprintln!("forel: {failure}");
    match failure {
        Failure::Usage(_) => EXIT_USAGE,
        Failure::Runtime(_) => EXIT_RUNTIME,
    }
}

/// `run.csv` swept over `eta=0.5` becomes `run_eta0.5.csv`.
fn sweep_output(out: &Path, param: &str, value: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_{param}{value}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{param}{value}"),
    };
    out.with_file_name(name)
}

fn sweep(raw: RawConfig, param: &str, values: &[String], jobs: Option<usize>) -> u8 {
    if param == "out" {
        return report(&ConfigError::new("out", "cannot be swept").into());
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut one = match merge(raw.clone(), [(param, v.clone())]) {
            Ok(r) => r,
            Err(e) => return report(&e.into()),
        };
        let Some(out) = one.get("out").cloned() else {
            return report(&ConfigError::new("out", "missing required key").into());
        };
        one.insert("out".into(), sweep_output(Path::new(&out), param, v).display().to_string());
        match RunConfig::from_raw(one) {
            Ok(c) => configs.push(c),
            Err(e) => return report(&e.into()),
        }
    }

    let workers = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, configs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(), Failure>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = run_experiment(cfg);
                results.lock().expect("sweep results lock")[i] = Some(r);
            });
        }
    });

    let mut code = 0;
    for (cfg, r) in configs.iter().zip(results.into_inner().expect("sweep results lock")) {
        match r.expect("every sweep entry runs") {
            Ok(()) => println!("{}", cfg.out.display()),
            Err(f) => code = code.max(report(&f)),
        }
    }
    code
}

fn validate_game(selector: &str) -> u8 {
    let game = match selector
        .parse::<GameSelector>()
        .map_err(|m| ConfigError::new("game", m))
        .and_then(|s| load_game(&s))
    {
        Ok(g) => g,
        Err(e) => return report(&e.into()),
    };
    println!("players: {}", game.num_players());
    println!("histories: {}", game.num_histories());
    for p in 0..game.num_players() {
        println!("infostates player {}: {}", p + 1, game.player_infostates(p).len());
    }
    let violations = forel_core::validate(&game);
    if violations.is_empty() {
        println!("ok");
        0
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        EXIT_RUNTIME
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, overrides } => {
            match base_config(config.as_deref(), &overrides).and_then(RunConfig::from_raw) {
                Ok(cfg) => match run_experiment(&cfg) {
                    Ok(()) => 0,
                    Err(f) => report(&f),
                },
                Err(e) => report(&e.into()),
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            jobs,
            overrides,
        } => match base_config(config.as_deref(), &overrides) {
            Ok(raw) => sweep(raw, &param, &values, jobs),
            Err(e) => report(&e.into()),
        },
        Command::ValidateGame { game } => validate_game(&game),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_outputs_are_distinct() {
        assert_eq!(
            sweep_output(Path::new("d/run.csv"), "eta", "0.5"),
            PathBuf::from("d/run_eta0.5.csv")
        );
        assert_eq!(sweep_output(Path::new("run"), "eta", "10"), PathBuf::from("run_eta10"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
