fn main() {
    std::process::exit(hybrid_cov::cli::main());
}
