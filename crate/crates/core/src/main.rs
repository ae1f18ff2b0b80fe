fn main() {
    std::process::exit(fluctlab::cli::main_with_args(std::env::args_os()));
}
