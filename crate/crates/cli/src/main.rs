use clap::Parser;

fn main() {
    let cli = shiptrack_cli::Cli::parse();
    shiptrack_cli::init_logging(cli.verbose);
    if let Err(e) = shiptrack_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
