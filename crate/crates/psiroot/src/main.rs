use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(psiroot::cli::run(std::env::args_os()))
}
