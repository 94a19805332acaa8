fn main() {
    std::process::exit(lamforge::cli::dispatch(std::env::args_os()));
}
