fn main() {
    std::process::exit(halfmax::cli::run(std::env::args_os()));
}
