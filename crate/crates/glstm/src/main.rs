fn main() {
    std::process::exit(glstm::cli::run());
}
