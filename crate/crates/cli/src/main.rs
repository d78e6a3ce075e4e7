use std::process::ExitCode;

use clap::Parser;
use lindblad_riemann_cli::{run, thread_cap, Cli, CliError};

fn configure_threads() -> Result<(), CliError> {
    let var = std::env::var("LINDBLAD_RIEMANN_THREADS").ok();
    if let Some(n) = thread_cap(var.as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
