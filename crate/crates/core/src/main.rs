fn main() {
    std::process::exit(cmflow::cli::parse_and_dispatch(std::env::args_os()));
}
