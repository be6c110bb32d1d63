fn main() {
    std::process::exit(gwt_core::cli::main());
}
