fn main() {
    std::process::exit(robocmd::pipeline::cli::run(std::env::args_os()));
}
