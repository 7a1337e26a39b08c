use clap::Parser;
use featseg_cli::args::Cli;

fn main() {
    // clap exits with status 2 on malformed arguments
    let cli = Cli::parse();
    if let Err(e) = featseg_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
