fn main() -> std::process::ExitCode {
    calibkit::cli::main()
}
