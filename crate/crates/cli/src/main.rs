use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser};

use ionxy_cli::commands::{run, Context};
use ionxy_cli::config::ConfigFile;
use ionxy_cli::output::{Format, Provenance, Writer};
use ionxy_cli::{CliError, CommandKind, PaperFig};

/// Trapped-ion XY model experiments.
#[derive(Debug, Parser)]
#[command(name = "ionxy", version)]
struct Cli {
    /// Subcommand; may be omitted when `--paper-fig` is given.
    #[arg(value_enum)]
    command: Option<CommandKind>,
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Load a preset for one of the reproduced figures.
    #[arg(long, value_enum, value_name = "ID")]
    paper_fig: Option<PaperFig>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, value_name = "K")]
    threads: Option<usize>,
    /// List written files on stderr.
    #[arg(short, long, action = ArgAction::Count)]
    verbose: u8,
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let kind = match (cli.command, cli.paper_fig) {
        (None, None) => return Err(CliError::Config("give a subcommand or --paper-fig".into())),
        (Some(k), Some(fig)) if k != fig.command() => {
            return Err(CliError::Config(format!(
                "--paper-fig runs `{}`, not `{}`",
                fig.command().label(),
                k.label()
            )))
        }
        (Some(k), _) => k,
        (None, Some(fig)) => fig.command(),
    };
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            ConfigFile::parse(&text)?
        }
        None => ConfigFile::default(),
    };
    if let Some(fig) = cli.paper_fig {
        config = config.with_defaults(fig.defaults());
    }
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let provenance = Provenance::new(config.hash(kind.label()), cli.seed);
    let mut writer = Writer::new(&cli.out, cli.format, provenance)?;
    run(kind, &mut Context { config: &config, seed: cli.seed, writer: &mut writer })?;
    Ok(writer.written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            if cli.verbose > 0 {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
