fn main() {
    std::process::exit(persona_engine::cli::run(std::env::args_os()));
}
