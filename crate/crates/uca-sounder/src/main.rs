fn main() {
    std::process::exit(uca_sounder::cli::cli_run(std::env::args_os()));
}
