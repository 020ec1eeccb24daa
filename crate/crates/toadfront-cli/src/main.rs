fn main() {
    std::process::exit(toadfront_cli::run_from(std::env::args_os()));
}
