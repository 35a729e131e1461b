fn main() {
    std::process::exit(mixsense::cli::run(std::env::args_os()));
}
