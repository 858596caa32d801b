fn main() {
    std::process::exit(debias::cli::run(std::env::args_os()));
}
