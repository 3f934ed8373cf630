use std::process::ExitCode;

fn main() -> ExitCode {
    evoengineer::cli::main()
}
