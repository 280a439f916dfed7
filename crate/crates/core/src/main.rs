fn main() {
    std::process::exit(rtpmatch::cli::run(std::env::args_os()));
}
