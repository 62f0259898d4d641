fn main() {
    std::process::exit(arw_cli::parse_and_run(std::env::args_os()));
}
