fn main() -> std::process::ExitCode {
    plsprune::cli::main()
}
