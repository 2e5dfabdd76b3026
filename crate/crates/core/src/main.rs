use std::process::ExitCode;

fn main() -> ExitCode {
    cfipw::cli::main()
}
