fn main() -> std::process::ExitCode {
    samix::cli::main()
}
