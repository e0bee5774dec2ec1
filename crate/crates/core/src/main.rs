fn main() {
    std::process::exit(tiersim::cli::main_with_args(std::env::args_os()));
}
