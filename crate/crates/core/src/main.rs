fn main() {
    std::process::exit(effdim::cli::run(std::env::args_os()));
}
