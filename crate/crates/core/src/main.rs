fn main() {
    std::process::exit(derand::cli::run(std::env::args_os()));
}
