fn main() {
    std::process::exit(bayes_sard::cli::run(std::env::args_os()));
}
