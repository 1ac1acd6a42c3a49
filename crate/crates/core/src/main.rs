fn main() {
    std::process::exit(narx_sysid::cli::run(std::env::args_os()));
}
