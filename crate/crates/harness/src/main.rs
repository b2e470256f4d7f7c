use std::process::ExitCode;

use dynregret_harness::cli;
use dynregret_harness::config::OUT_ENV_VAR;

fn main() -> ExitCode {
    let parsed = match cli::parse(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let env_out = std::env::var_os(OUT_ENV_VAR).filter(|v| !v.is_empty()).map(Into::into);
    match cli::execute(&parsed, env_out) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
