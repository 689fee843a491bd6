fn main() {
    std::process::exit(genfs::cli::main_with_args(std::env::args_os()));
}
