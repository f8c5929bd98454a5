fn main() {
    std::process::exit(dihedra::cli::run(std::env::args_os()));
}
