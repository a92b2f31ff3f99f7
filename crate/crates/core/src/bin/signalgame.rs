fn main() {
    std::process::exit(signalgame::cli::main_with_args(std::env::args_os()));
}
