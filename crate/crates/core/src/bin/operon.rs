fn main() {
    std::process::exit(operon::cli::run());
}
