fn main() {
    std::process::exit(spikedistill_cli::run(std::env::args_os()));
}
