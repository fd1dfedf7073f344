fn main() {
    std::process::exit(easn_cli::run(std::env::args_os()));
}
