fn main() {
    std::process::exit(specpred::cli::main_with_args(std::env::args_os()));
}
