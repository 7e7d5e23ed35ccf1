fn main() {
    std::process::exit(kdvb::cli::main_exit_code());
}
