use clap::Parser;

fn main() {
    let cli = scanshare::cli::Cli::parse();
    if let Err(e) = scanshare::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
