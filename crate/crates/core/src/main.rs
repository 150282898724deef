fn main() {
    std::process::exit(mbt_qve::cli::cli_main(std::env::args_os()));
}
