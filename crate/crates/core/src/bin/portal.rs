fn main() -> std::process::ExitCode {
    transfer_portal::cli::run()
}
