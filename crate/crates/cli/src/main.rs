use clap::Parser;

fn main() {
    let cli = cdyn::Cli::parse();
    std::process::exit(cdyn::run(&cli).code());
}
