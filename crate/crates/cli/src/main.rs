fn main() {
    std::process::exit(ddpca_cli::main_with_args(std::env::args_os().collect()));
}
