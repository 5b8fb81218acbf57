use clap::Parser;

fn main() {
    let cli = mcif_cli::cli::Cli::parse();
    std::process::exit(mcif_cli::cli::main_with(cli));
}
