use clap::Parser;

fn main() {
    let cli = ffnlab::cli::Cli::parse();
    if let Err(err) = ffnlab::cli::run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
