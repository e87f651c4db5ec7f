fn main() {
    std::process::exit(urbangraph_cli::run(std::env::args_os()));
}
