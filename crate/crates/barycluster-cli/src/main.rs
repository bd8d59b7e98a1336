use std::process::exit;

fn main() {
    exit(barycluster_cli::run_command(std::env::args_os()));
}
