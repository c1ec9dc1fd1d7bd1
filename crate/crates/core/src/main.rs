fn main() {
    let code = gwcouple::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
