use clap::Parser;

use overtensor_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = overtensor_cli::execute(&cli) {
        // a closed downstream pipe (e.g. `| head`) is not a failure
        if let overtensor_cli::error::CliError::Io(io) = &e {
            if io.kind() == std::io::ErrorKind::BrokenPipe {
                return;
            }
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
