fn main() {
    std::process::exit(fracheat::cli::run());
}
