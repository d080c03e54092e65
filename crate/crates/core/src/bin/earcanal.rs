fn main() {
    std::process::exit(earcanal::cli::main_with_args(std::env::args_os()));
}
