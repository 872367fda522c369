use std::process::ExitCode;

use clap::Parser;
use diarkit::cli::{run, Cli};
use diarkit::pipeline::PipelineError;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                PipelineError::Validation(_) => 2,
                PipelineError::Runtime(_) => 1,
            })
        }
    }
}
