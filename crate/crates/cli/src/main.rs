use clap::Parser;

fn main() {
    let cli = multifuse::Cli::parse();
    if let Err(err) = multifuse::run(&cli) {
        eprintln!("multifuse: error: {err}");
        std::process::exit(1);
    }
}
