fn main() {
    std::process::exit(genmoment::cli::main_with_args(std::env::args_os()));
}
