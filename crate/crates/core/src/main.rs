fn main() {
    std::process::exit(volmatte::cli::main_with_args(std::env::args_os()));
}
