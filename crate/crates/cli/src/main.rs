fn main() {
    std::process::exit(guiliner_cli::main_with_args(std::env::args_os()));
}
