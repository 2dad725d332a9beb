use std::process::ExitCode;

fn main() -> ExitCode {
    let code = dynot_cli::run_cli(std::env::args());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
