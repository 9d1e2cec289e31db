fn main() {
    std::process::exit(entsamp::run(std::env::args_os()));
}
