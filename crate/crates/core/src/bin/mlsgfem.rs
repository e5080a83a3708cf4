fn main() {
    std::process::exit(mlsgfem::cli::main_with_args(std::env::args_os()));
}
