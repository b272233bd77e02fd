fn main() {
    std::process::exit(gabench::cli::dispatch(std::env::args_os()));
}
