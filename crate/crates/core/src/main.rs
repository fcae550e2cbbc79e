fn main() {
    std::process::exit(ddnc_core::cli::run(std::env::args_os()));
}
