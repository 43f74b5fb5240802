fn main() {
    std::process::exit(varembed::cli::run());
}
