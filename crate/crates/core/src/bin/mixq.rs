use clap::Parser;

fn main() {
    let cli = mixq::cli::Cli::parse();
    if let Err(e) = mixq::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
