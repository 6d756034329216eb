fn main() {
    std::process::exit(rercefed::cli::main_from_env());
}
