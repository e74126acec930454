use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hslab::cli::main_with(std::env::args_os()))
}
