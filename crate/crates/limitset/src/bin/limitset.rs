fn main() {
    std::process::exit(limitset::cli::run(std::env::args()));
}
