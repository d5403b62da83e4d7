fn main() {
    std::process::exit(mtl_core::runner::cli::main_from(std::env::args_os()));
}
