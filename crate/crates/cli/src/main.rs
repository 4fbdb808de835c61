fn main() {
    std::process::exit(edgeattnet_cli::run(std::env::args_os()));
}
