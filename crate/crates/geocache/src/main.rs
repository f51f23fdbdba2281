fn main() {
    std::process::exit(geocache::cli::run(std::env::args_os()));
}
