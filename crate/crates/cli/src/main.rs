fn main() {
    std::process::exit(pli_cli::run(std::env::args_os()));
}
