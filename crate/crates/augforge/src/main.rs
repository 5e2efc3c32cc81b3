fn main() {
    std::process::exit(augforge::cli::main_with_args(std::env::args_os()));
}
