mod args;
mod commands;
mod exit;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Grid(a) => commands::grid(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Compare(a) => commands::compare(a),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit::code_for(&err));
    }
}
