fn main() {
    std::process::exit(singular_em::cli::main(std::env::args_os()));
}
