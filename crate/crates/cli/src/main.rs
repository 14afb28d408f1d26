fn main() {
    std::process::exit(ncol_cli::dispatch(std::env::args_os()));
}
