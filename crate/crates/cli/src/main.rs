fn main() {
    std::process::exit(aipoc_cli::main_with_args(std::env::args_os()));
}
