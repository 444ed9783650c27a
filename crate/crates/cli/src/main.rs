use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use symscale_cli::{parse_config, run, write_error_report, Command, ConfigError, Failure, RunConfig, RunOptions};

/// Complex scaling of radial Laplacians on H2 and SL(3,R)/SO(3).
#[derive(Parser, Debug)]
#[command(name = "symscale", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration (optional for `verify`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps; affects speed only.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            parse_config(&text)
        }
        None if cli.command == Command::Verify => Ok(RunConfig::default()),
        None => Err(ConfigError("--config is required for this subcommand".into())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    symscale::use_sequential_kernels();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("could not start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions {
        out: cli.out.clone(),
        quiet: cli.quiet,
    };
    let result = load(&cli)
        .map_err(Failure::from)
        .and_then(|cfg| run(cli.command, &cfg, &opts));
    match result {
        Ok(o) => {
            for f in &o.files {
                if !cli.quiet {
                    println!("{}", f.display());
                }
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verify: some checks failed");
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("{f}");
            if let Err(e) = write_error_report(&opts.out, &f) {
                eprintln!("could not write the error report: {e}");
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
