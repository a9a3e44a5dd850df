fn main() {
    std::process::exit(eip::cli::run(std::env::args_os()));
}
