fn main() {
    std::process::exit(veinroi_cli::run(std::env::args_os()));
}
