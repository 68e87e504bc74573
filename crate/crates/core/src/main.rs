fn main() {
    std::process::exit(mlcd::cli::main_with_args(std::env::args_os()));
}
