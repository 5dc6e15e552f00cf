fn main() {
    let code = spicorr::cli::run(std::env::args_os());
    std::process::exit(code);
}
