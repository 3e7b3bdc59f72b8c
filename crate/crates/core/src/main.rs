fn main() {
    std::process::exit(sdecouple::cli::run(std::env::args_os()));
}
