fn main() {
    let code = abvr_cli::main_with(std::env::args_os(), &abvr_cli::Env::from_process());
    std::process::exit(code);
}
