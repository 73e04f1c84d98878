fn main() {
    std::process::exit(bconcord_cli::run(std::env::args_os()));
}
