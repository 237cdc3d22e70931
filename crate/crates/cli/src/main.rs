fn main() {
    std::process::exit(csa_cli::main_with_args(std::env::args_os()));
}
