fn main() -> std::process::ExitCode {
    groundchain::cli::main()
}
