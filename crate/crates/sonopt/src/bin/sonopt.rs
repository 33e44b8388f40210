fn main() {
    std::process::exit(sonopt::cli::run(std::env::args_os()));
}
