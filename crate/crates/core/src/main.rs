fn main() {
    std::process::exit(hollingtanner::cli::main_with_args(std::env::args_os()));
}
