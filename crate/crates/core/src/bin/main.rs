fn main() {
    std::process::exit(obstacle_control::cli::main_with_args(std::env::args_os()));
}
