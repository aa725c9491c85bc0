fn main() {
    std::process::exit(l0dc::cli::main_with_args(std::env::args_os()));
}
