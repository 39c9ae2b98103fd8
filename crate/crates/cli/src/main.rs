use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use osclab::decaylab::Verdict;
use osclab::phasekit::{format_rational, registry_entries};

mod config;
mod run;
mod svg;

use config::{ExperimentConfig, Kind};
use run::{Failure, Report};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

/// Experiment runner for oscillatory forms, sublevel sets and web geometry.
#[derive(Parser)]
#[command(name = "osclab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay ladders of the trilinear and planar forms.
    Decay {
        #[command(subcommand)]
        action: DecayAction,
    },
    /// Sublevel-set measures.
    Sublevel {
        #[command(subcommand)]
        action: SublevelAction,
    },
    /// Web curvature and rank-one degeneracy.
    Web {
        #[command(subcommand)]
        action: WebAction,
    },
    /// Structured/pseudorandom decomposition.
    Microlocal {
        #[command(subcommand)]
        action: MicrolocalAction,
    },
    /// Negative-order Sobolev energy of chirped indicators.
    Hsigma {
        #[command(subcommand)]
        action: HsigmaAction,
    },
    /// Named phases.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Subcommand)]
enum DecayAction {
    Run(RunArgs),
}

#[derive(Subcommand)]
enum SublevelAction {
    Sample(RunArgs),
    /// Exact block sum of the multiprogression construction.
    Witness18(RunArgs),
}

#[derive(Subcommand)]
enum WebAction {
    Curvature(RunArgs),
    Degeneracy(RunArgs),
}

#[derive(Subcommand)]
enum MicrolocalAction {
    Decompose(RunArgs),
}

#[derive(Subcommand)]
enum HsigmaAction {
    Check(RunArgs),
}

#[derive(Subcommand)]
enum RegistryAction {
    /// Print `name | reference exponent` rows.
    List {
        /// Keep rows whose name contains this string.
        #[arg(long, default_value = "")]
        filter: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 4 when the verdict is a mismatch.
    #[arg(long)]
    assert: bool,
    /// Overrides the config output prefix.
    #[arg(long)]
    out: Option<String>,
}

fn load(args: &RunArgs, expected: Kind) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if cfg.kind != expected {
        return Err(format!("config kind {:?} does not match this subcommand ({expected:?})", cfg.kind));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn write_outputs(prefix: &str, report: &Report) -> std::io::Result<()> {
    let base = Path::new(prefix);
    if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let with = |ext: &str| PathBuf::from(format!("{prefix}.{ext}"));
    fs::write(with("csv"), &report.csv)?;
    let mut json = serde_json::to_string_pretty(&report.json).expect("report values are serializable");
    json.push('\n');
    fs::write(with("json"), json)?;
    if let Some(svg) = &report.svg {
        fs::write(with("svg"), svg)?;
    }
    Ok(())
}

fn execute(args: &RunArgs, kind: Kind) -> ExitCode {
    let cfg = match load(args, kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match kind {
        Kind::Decay => run::decay(&cfg),
        Kind::Sublevel => run::sublevel(&cfg),
        Kind::Witness18 => run::witness18(&cfg),
        Kind::Web => run::web(&cfg),
        Kind::Degeneracy => run::degeneracy(&cfg),
        Kind::Microlocal => run::microlocal(&cfg),
        Kind::Hsigma => run::hsigma(&cfg),
    };
    let report = match result {
        Ok(r) => r,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    if let Err(e) = write_outputs(&cfg.output, &report) {
        eprintln!("error: cannot write outputs for `{}`: {e}", cfg.output);
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("{}", report.summary);
    if args.assert && report.verdict == Some(Verdict::Mismatch) {
        eprintln!("assertion failed: verdict Mismatch");
        return ExitCode::from(EXIT_MISMATCH);
    }
    ExitCode::SUCCESS
}

fn registry_table(filter: &str) -> String {
    let mut out = String::from("phase | exponent\n");
    for e in registry_entries().iter().filter(|e| e.name.contains(filter)) {
        let gamma = e.reference_exponent.map_or("-".to_string(), format_rational);
        out.push_str(&format!("{} | {}\n", e.name, gamma));
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Decay { action: DecayAction::Run(a) } => execute(&a, Kind::Decay),
        Command::Sublevel { action } => match action {
            SublevelAction::Sample(a) => execute(&a, Kind::Sublevel),
            SublevelAction::Witness18(a) => execute(&a, Kind::Witness18),
        },
        Command::Web { action } => match action {
            WebAction::Curvature(a) => execute(&a, Kind::Web),
            WebAction::Degeneracy(a) => execute(&a, Kind::Degeneracy),
        },
        Command::Microlocal { action: MicrolocalAction::Decompose(a) } => execute(&a, Kind::Microlocal),
        Command::Hsigma { action: HsigmaAction::Check(a) } => execute(&a, Kind::Hsigma),
        Command::Registry { action: RegistryAction::List { filter } } => {
            print!("{}", registry_table(&filter));
            ExitCode::SUCCESS
        }
    }
}
