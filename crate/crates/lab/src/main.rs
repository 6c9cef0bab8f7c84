use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfheal_lab::core::chaos;
use selfheal_lab::core::execute::Mode;
use selfheal_lab::core::experiment::ExperimentConfig;
use selfheal_lab::emit::{self, Format};
use selfheal_lab::study::{self, Study};
use selfheal_lab::{check, config, LabError};

/// Fault-injection testbed for a self-healing web application.
#[derive(Parser, Debug)]
#[command(name = "selfheal", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Print the built-in configuration as TOML and exit.
    #[arg(long)]
    print_default_config: bool,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// autofix, manual, rule-only, orchestrator or no-heal.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Directory for report files; without it the report goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    replications: Option<u32>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    format: Format,
    /// Exit with 3 when a result falls outside its acceptance band.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detection and recovery tables for the configured mode against manual handling.
    Run,
    /// All four healing approaches on identical seeds.
    Baselines,
    /// Repeated learning cycles with a persistent knowledge base.
    Feedback,
    /// Fault-rate, threshold and load sweeps.
    Sweep,
    /// The fault scenario catalog.
    Catalog,
    /// Validate a configuration file.
    ValidateConfig,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown mode {s:?}; expected one of {}", names()))
}

fn names() -> String {
    Mode::ALL
        .iter()
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join(", ")
}

fn load(opts: &Opts) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &opts.config {
        Some(p) => config::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(m) = opts.mode {
        cfg.mode = m;
    }
    if let Some(n) = opts.replications {
        cfg.replications = n;
    }
    Ok(cfg)
}

fn to_stdout(study: &Study, format: Format) -> Result<(), LabError> {
    match format {
        Format::Json => println!("{}", emit::json(&study.report)?),
        Format::Md => print!("{}", emit::markdown(&study.report)),
        Format::Csv => {
            for (name, body) in emit::csv_tables(&study.report)? {
                println!("# {name}\n{body}");
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, LabError> {
    if cli.print_default_config {
        print!("{}", config::default_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let opts = cli.opts;
    let Some(command) = cli.command else {
        eprintln!("no subcommand given; see --help");
        return Ok(ExitCode::from(2));
    };
    let cfg = load(&opts)?;
    let study = match command {
        Command::Catalog => {
            let body = emit::scenarios_json(&cfg.world.scenarios)?;
            match &opts.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|source| LabError::Io {
                        path: dir.clone(),
                        source,
                    })?;
                    let path = dir.join("scenarios.json");
                    std::fs::write(&path, body).map_err(|source| LabError::Io { path, source })?;
                }
                None => {
                    for s in &cfg.world.scenarios {
                        println!(
                            "{:>3}  {:?} on {:?}  {:?}",
                            s.id, s.fault_type, s.target, s.severity
                        );
                    }
                    if cfg.world.scenarios != chaos::catalog() {
                        println!("(catalog overridden by config)");
                    }
                }
            }
            return Ok(ExitCode::SUCCESS);
        }
        Command::ValidateConfig => {
            for w in config::check(&cfg)? {
                println!("warning: {w}");
            }
            println!("ok");
            return Ok(ExitCode::SUCCESS);
        }
        Command::Run => study::run_experiment(&cfg)?,
        Command::Baselines => study::run_baselines(&cfg)?,
        Command::Feedback => study::run_feedback(&cfg)?,
        Command::Sweep => study::run_sweeps(&cfg)?,
    };
    match &opts.out {
        Some(dir) => {
            for p in emit::write(dir, &study, opts.format)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => to_stdout(&study, opts.format)?,
    }
    if opts.check {
        let gates = check::evaluate(&study.report);
        for g in &gates {
            eprintln!("{g}");
        }
        if gates.iter().any(|g| !g.pass) {
            return Ok(ExitCode::from(3));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
