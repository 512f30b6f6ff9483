//! Binary entry point; all logic lives in the library so tests can call it.

fn main() {
    std::process::exit(lcbandit::cli::main());
}
