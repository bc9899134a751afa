fn main() {
    std::process::exit(ptree_harness::cli::main_with_args(std::env::args_os()));
}
