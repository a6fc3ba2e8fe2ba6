use std::process::ExitCode;

fn main() -> ExitCode {
    loo_adapt::cli::main_with_args(std::env::args_os())
}
