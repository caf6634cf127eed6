fn main() {
    std::process::exit(anisokepler_cli::run(std::env::args_os()));
}
