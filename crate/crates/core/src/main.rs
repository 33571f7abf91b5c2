fn main() {
    std::process::exit(kobarrier::cli::main_with_args(std::env::args_os()));
}
