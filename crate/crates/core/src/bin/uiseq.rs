fn main() {
    std::process::exit(uiseq::cli::run(std::env::args_os()));
}
