fn main() {
    let code = reviewnet::cli::run(std::env::args_os(), &|key| std::env::var(key).ok());
    std::process::exit(code);
}
