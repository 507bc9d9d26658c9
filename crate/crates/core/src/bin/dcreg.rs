fn main() {
    std::process::exit(dcreg::cli::run());
}
