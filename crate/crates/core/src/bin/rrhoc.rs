fn main() {
    std::process::exit(rrhoc::cli::main_entry());
}
