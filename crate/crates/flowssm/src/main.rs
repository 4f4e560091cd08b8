fn main() {
    std::process::exit(flowssm::cli::run(std::env::args_os()));
}
