fn main() {
    std::process::exit(expcli::cli::main_with(std::env::args_os()));
}
