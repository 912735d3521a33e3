fn main() {
    std::process::exit(sle_nv::cli::run(std::env::args_os()));
}
