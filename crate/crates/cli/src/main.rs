fn main() {
    std::process::exit(softsql_cli::run(std::env::args_os()));
}
