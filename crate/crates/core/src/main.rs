fn main() {
    std::process::exit(vlc_jcp::cli::run(std::env::args_os()));
}
