fn main() {
    std::process::exit(chainswarm::cli::main_with_args(std::env::args_os()));
}
