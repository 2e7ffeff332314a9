use clap::Parser;
use pauli_blocking::cli::{main_with, Args};

fn main() {
    std::process::exit(main_with(Args::parse()));
}
