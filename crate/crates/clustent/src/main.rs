use std::process::ExitCode;

fn main() -> ExitCode {
    clustent::cli::main_with(std::env::args_os())
}
