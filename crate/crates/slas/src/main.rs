use std::process::ExitCode;

fn main() -> ExitCode {
    slas::cli::main_with(std::env::args_os())
}
