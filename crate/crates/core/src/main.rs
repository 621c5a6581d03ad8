fn main() {
    std::process::exit(cineplan::cli::run(std::env::args_os()));
}
