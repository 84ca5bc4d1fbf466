fn main() {
    std::process::exit(keb_lab::cli::run());
}
