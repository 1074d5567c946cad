fn main() {
    std::process::exit(xenovert::cli::run_from(std::env::args_os()));
}
