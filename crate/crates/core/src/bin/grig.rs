fn main() {
    std::process::exit(grig::cli::run(std::env::args_os()));
}
