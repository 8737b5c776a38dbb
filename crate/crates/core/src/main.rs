fn main() {
    std::process::exit(safescale::cli::main_with_args(std::env::args_os()));
}
