fn main() {
    std::process::exit(hlt::cli::dispatch(std::env::args_os()));
}
