use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(riq::cli::run(std::env::args_os()))
}
