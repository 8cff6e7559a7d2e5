fn main() {
    std::process::exit(inrl_harness::cli::main_with_args(std::env::args_os()));
}
