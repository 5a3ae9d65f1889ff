fn main() -> std::process::ExitCode {
    haml::cli::main()
}
