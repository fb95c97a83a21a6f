fn main() {
    std::process::exit(wagan_core::cli::main_with_args(std::env::args_os()));
}
