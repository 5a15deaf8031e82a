use std::process::exit;

fn main() {
    exit(siforest_cli::run_cli(std::env::args_os()));
}
