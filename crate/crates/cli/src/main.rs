fn main() {
    std::process::exit(aobstacle_cli::main_with(std::env::args_os()));
}
