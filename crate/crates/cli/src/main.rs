fn main() {
    std::process::exit(tensorbel_cli::main_with_stdio());
}
