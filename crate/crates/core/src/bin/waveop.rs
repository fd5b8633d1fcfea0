fn main() {
    std::process::exit(waveop_core::cli::main());
}
