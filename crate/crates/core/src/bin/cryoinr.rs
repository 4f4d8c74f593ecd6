fn main() -> std::process::ExitCode {
    cryoinr::cli::main()
}
