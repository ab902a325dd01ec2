fn main() {
    std::process::exit(aiqn::cli::run(std::env::args_os()));
}
