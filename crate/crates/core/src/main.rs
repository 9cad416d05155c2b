fn main() {
    std::process::exit(lagan_core::cli::run(std::env::args_os()));
}
