fn main() {
    let code = relgraph::cli::run(std::env::args_os());
    std::process::exit(code);
}
