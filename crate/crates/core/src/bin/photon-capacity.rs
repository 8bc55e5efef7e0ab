use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let status = photon_capacity::cli::main_with_args(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock());
    ExitCode::from(status as u8)
}
