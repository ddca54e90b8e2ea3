fn main() {
    std::process::exit(independence_weights::cli::run(std::env::args_os()));
}
