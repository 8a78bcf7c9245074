fn main() -> std::process::ExitCode {
    eqmanifold_lab::cli::main()
}
