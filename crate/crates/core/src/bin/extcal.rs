use std::process::ExitCode;

fn main() -> ExitCode {
    extcal::cli::run(std::env::args_os())
}
