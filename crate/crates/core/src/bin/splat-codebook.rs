fn main() {
    std::process::exit(splat_codebook::cli::run(std::env::args_os()));
}
