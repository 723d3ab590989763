use clap::Parser;

fn main() {
    let cli = gelshatter_cli::Cli::parse();
    if let Err(e) = gelshatter_cli::execute(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
