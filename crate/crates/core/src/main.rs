fn main() {
    std::process::exit(picpriv::cli::main_with_args(std::env::args_os()));
}
