fn main() {
    std::process::exit(panoslam::cli::main_with_args(std::env::args_os()));
}
