use clap::Parser;

fn main() {
    let cli = umrmt::cli::Cli::parse();
    std::process::exit(umrmt::cli::run(cli));
}
