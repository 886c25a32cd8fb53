fn main() {
    std::process::exit(spdelab::harness::cli::run_cli(std::env::args_os()));
}
