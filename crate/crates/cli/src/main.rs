fn main() {
    std::process::exit(mcdc_cli::run(std::env::args_os()));
}
