fn main() {
    std::process::exit(oglasso::cli::main());
}
