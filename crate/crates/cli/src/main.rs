use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(robust_lookback_cli::main_with(std::env::args_os()))
}
