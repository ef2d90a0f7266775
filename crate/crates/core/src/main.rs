fn main() {
    std::process::exit(ne_gossip::cli::main_with_args(std::env::args_os()));
}
