fn main() {
    std::process::exit(dro_portfolio::cli::main_with_args(std::env::args_os()));
}
