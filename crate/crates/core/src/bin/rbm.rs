fn main() {
    std::process::exit(rbm_core::cli::cli_main(std::env::args_os()));
}
