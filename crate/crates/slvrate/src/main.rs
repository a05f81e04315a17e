fn main() {
    std::process::exit(slvrate::cli::main_with(std::env::args_os()));
}
