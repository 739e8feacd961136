use clap::Parser;

fn main() {
    let args = rician_mimo::cli::Cli::parse();
    std::process::exit(rician_mimo::cli::run(args));
}
