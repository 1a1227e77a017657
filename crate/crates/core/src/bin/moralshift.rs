use std::process::ExitCode;

fn main() -> ExitCode {
    moralshift::cli::main()
}
