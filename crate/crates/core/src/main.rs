fn main() {
    std::process::exit(tgrnet::cli::run(std::env::args_os()));
}
