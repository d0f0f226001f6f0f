fn main() {
    std::process::exit(thz_restore::cli::main_with_args(std::env::args_os()));
}
