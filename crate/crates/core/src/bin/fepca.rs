fn main() {
    std::process::exit(fepca::cli::cli_main());
}
