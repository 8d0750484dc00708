fn main() {
    std::process::exit(fluid_observer::cli::run(std::env::args_os()));
}
