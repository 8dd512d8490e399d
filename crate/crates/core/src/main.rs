fn main() {
    std::process::exit(partaog::cli::run(std::env::args_os()));
}
