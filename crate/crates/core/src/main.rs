use std::process::ExitCode;

fn main() -> ExitCode {
    gaugekit::cli::main()
}
