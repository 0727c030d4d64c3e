fn main() {
    std::process::exit(compliant_harness::cli::main_with_args(std::env::args_os()));
}
