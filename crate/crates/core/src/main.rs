use clap::Parser;
use twinheat::cli::{run, Cli, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    let outcome = run(&cli);
    if outcome.code == EXIT_OK {
        println!("{}", outcome.message);
    } else {
        eprintln!("twinheat: {}", outcome.message);
    }
    std::process::exit(outcome.code);
}
