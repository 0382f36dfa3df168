fn main() {
    std::process::exit(pstrat::cli::run(std::env::args_os()));
}
