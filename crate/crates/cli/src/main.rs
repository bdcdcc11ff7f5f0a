fn main() {
    std::process::exit(himol_cli::run(std::env::args_os()));
}
