fn main() {
    std::process::exit(np_shape::cli::run(std::env::args_os()));
}
