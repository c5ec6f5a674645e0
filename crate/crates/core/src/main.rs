fn main() {
    std::process::exit(kornlab::cli::main_with_args(std::env::args_os()));
}
