fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(laplace_cli::run(&argv));
}
