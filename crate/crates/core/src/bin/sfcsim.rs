fn main() {
    std::process::exit(sfcsim::cli::main_with_args(std::env::args_os()));
}
