fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(tda_lab_cli::main_with_args(&args));
}
