fn main() {
    std::process::exit(annular::cli::main_with_args(std::env::args_os()));
}
