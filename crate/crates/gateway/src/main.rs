fn main() {
    std::process::exit(swarmsim_gateway::cli::main_with(std::env::args_os()));
}
