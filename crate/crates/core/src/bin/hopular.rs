fn main() {
    std::process::exit(hopular::harness::cli::main_with_args(std::env::args_os()));
}
