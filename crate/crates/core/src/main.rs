use std::process::ExitCode;

fn main() -> ExitCode {
    rotequiv::cli::run_from(std::env::args_os())
}
