fn main() {
    let code = fvm_markov::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
