fn main() {
    std::process::exit(ledgerstream_server::cli::run(std::env::args_os()));
}
