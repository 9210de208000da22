fn main() -> std::process::ExitCode {
    robbins_service::cli::run(std::env::args_os())
}
