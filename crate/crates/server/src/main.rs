fn main() {
    std::process::exit(pomdbg_server::cli::run(std::env::args_os()));
}
