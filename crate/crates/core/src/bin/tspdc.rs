fn main() {
    std::process::exit(tspdc::cli::run(std::env::args_os()));
}
