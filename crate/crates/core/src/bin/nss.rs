fn main() {
    std::process::exit(nss::cli::run(std::env::args_os()));
}
