fn main() {
    std::process::exit(silent_speech::cli::run(std::env::args_os()));
}
