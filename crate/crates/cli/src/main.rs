fn main() {
    std::process::exit(hypernet_cli::main_with_args(std::env::args_os()));
}
