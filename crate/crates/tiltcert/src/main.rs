fn main() {
    std::process::exit(tiltcert::cli::run_from_args());
}
