fn main() {
    std::process::exit(convex_ensemble::cli::run(std::env::args_os()));
}
