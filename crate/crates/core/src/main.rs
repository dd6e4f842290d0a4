fn main() {
    std::process::exit(spiked_detect::cli::cli_main(std::env::args().collect()));
}
