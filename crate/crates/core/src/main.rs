fn main() {
    std::process::exit(g2mhd::cli::main(std::env::args_os()));
}
