use std::process::ExitCode;

fn main() -> ExitCode {
    emotex::cli::main()
}
