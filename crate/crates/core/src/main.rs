use clap::Parser;

fn main() {
    let cli = hglance::cli::Cli::parse();
    std::process::exit(hglance::cli::run(cli));
}
