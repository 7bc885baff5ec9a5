fn main() {
    std::process::exit(anticip_mpc::cli::main());
}
