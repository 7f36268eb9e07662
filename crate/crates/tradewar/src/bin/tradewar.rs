fn main() {
    std::process::exit(tradewar::cli::main_with_args(std::env::args_os()));
}
