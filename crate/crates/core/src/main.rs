fn main() {
    std::process::exit(chartparse::cli::run(std::env::args_os()));
}
