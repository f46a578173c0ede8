fn main() {
    std::process::exit(dampwave::cli::main_entry());
}
