fn main() {
    std::process::exit(hypertraffic::cli::cli_main(std::env::args_os()));
}
