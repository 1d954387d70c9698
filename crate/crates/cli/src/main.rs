fn main() {
    std::process::exit(boltzkit_cli::run(std::env::args_os()));
}
