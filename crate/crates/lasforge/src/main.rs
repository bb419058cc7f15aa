fn main() {
    std::process::exit(lasforge::cli::run_cli(std::env::args()));
}
