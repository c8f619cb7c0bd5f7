fn main() {
    std::process::exit(tamperloc::cli::run_from(std::env::args_os()));
}
