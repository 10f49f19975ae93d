fn main() {
    std::process::exit(ardnmf_cli::run(std::env::args_os()));
}
