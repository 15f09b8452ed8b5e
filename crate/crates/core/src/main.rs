fn main() {
    std::process::exit(protoseg::cli::main_with_args(std::env::args_os()));
}
