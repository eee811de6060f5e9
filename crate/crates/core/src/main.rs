fn main() {
    std::process::exit(polos::cli::run(std::env::args_os()));
}
