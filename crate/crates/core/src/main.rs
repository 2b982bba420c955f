fn main() {
    std::process::exit(cdii::cli::cli_main(std::env::args_os()));
}
