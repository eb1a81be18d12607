use clap::Parser;

fn main() {
    let cli = spel_cli::Cli::parse();
    if let Err(e) = spel_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
