fn main() {
    std::process::exit(monorecon_cli::run_cli(std::env::args_os()));
}
