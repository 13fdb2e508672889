fn main() {
    std::process::exit(appnet::cli::main());
}
