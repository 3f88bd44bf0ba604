fn main() {
    std::process::exit(mvgp::cli::main());
}
