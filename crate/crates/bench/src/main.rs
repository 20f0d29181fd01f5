fn main() {
    std::process::exit(sttc_bench::cli::main_with_args(std::env::args_os()));
}
