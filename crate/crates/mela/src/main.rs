use clap::Parser;

fn main() {
    let cli = mela::cli::Cli::parse();
    if let Err(e) = mela::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
