fn main() {
    std::process::exit(criqa_cli::run(std::env::args_os()));
}
