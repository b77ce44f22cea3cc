fn main() {
    std::process::exit(coughscreen_cli::run(std::env::args_os()));
}
