use std::process::ExitCode;

use clap::Parser;
use feenberg_cli::{run, Cli};

/// Caps the worker pool when `FEENBERG_THREADS` is set to a positive integer.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("FEENBERG_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("FEENBERG_THREADS must be a positive integer, got {raw:?}"))?;
    anyhow::ensure!(n > 0, "FEENBERG_THREADS must be a positive integer, got {raw:?}");
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = configure_threads().and_then(|()| run(cli));
    match outcome {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
