use clap::Parser;

fn main() {
    std::process::exit(drmfac::cli::run(drmfac::cli::Cli::parse()));
}
