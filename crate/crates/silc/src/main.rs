fn main() {
    std::process::exit(silc::cli::dispatch(std::env::args_os()));
}
