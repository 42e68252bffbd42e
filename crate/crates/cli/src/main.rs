fn main() {
    std::process::exit(cde_core::harness::cli::run(std::env::args_os()));
}
