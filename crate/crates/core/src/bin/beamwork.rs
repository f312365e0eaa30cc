fn main() {
    std::process::exit(beamwork::cli::main());
}
