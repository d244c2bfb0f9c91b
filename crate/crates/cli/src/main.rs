fn main() {
    std::process::exit(logitfield_cli::dispatch(std::env::args_os()));
}
