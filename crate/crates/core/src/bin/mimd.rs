fn main() {
    std::process::exit(mimd_core::cli::main_with_args(std::env::args_os()));
}
