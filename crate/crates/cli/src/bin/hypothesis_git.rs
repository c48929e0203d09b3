use std::process::ExitCode;

fn main() -> ExitCode {
    sleuth_cli::tool_main(sleuth_core::tools::cli::GIT)
}
