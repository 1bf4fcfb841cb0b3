fn main() {
    std::process::exit(sigcamo_cli::run_cli(std::env::args_os()));
}
