fn main() {
    std::process::exit(piecewise_laplace::cli::run(std::env::args_os()));
}
