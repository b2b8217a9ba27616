fn main() {
    std::process::exit(asymmetry_kit::run(std::env::args_os()));
}
