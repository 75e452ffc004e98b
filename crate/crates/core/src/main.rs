fn main() {
    std::process::exit(strobo::cli::run(std::env::args_os()));
}
