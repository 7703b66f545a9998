fn main() {
    std::process::exit(epimix_cli::run(std::env::args().skip(1)));
}
