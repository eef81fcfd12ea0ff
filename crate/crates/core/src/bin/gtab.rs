fn main() {
    std::process::exit(graphtab::cli::run(std::env::args_os()));
}
