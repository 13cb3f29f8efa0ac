fn main() {
    std::process::exit(campus_rag::app::main_entry());
}
