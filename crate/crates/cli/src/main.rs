fn main() {
    std::process::exit(miolab_cli::run(std::env::args_os()));
}
