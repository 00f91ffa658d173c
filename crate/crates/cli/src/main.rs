fn main() {
    std::process::exit(roage_cli::run(std::env::args_os()));
}
