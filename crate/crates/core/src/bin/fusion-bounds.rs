fn main() {
    std::process::exit(fusion_bounds::cli::run(std::env::args_os()));
}
