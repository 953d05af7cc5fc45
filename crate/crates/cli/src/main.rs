fn main() {
    std::process::exit(fleetreg_cli::main_with_args(std::env::args_os()));
}
