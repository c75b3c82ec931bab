fn main() {
    std::process::exit(camal::cli::run());
}
