fn main() -> std::process::ExitCode {
    ailock::cli::main()
}
