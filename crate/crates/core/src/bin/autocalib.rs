fn main() {
    std::process::exit(autocalib::cli::main_with_args(std::env::args_os()));
}
