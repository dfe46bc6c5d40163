fn main() {
    std::process::exit(acd::cli::main_with_args(std::env::args_os()));
}
