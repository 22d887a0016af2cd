fn main() {
    std::process::exit(loglo_cli::run_command(std::env::args_os()));
}
