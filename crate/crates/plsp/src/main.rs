fn main() {
    std::process::exit(plsp::cli::main_with_args(std::env::args_os()));
}
