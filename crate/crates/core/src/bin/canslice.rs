fn main() {
    std::process::exit(canslice::cli::run(std::env::args_os()));
}
