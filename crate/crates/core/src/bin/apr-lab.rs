fn main() -> std::process::ExitCode {
    apr_lab::cli::main()
}
