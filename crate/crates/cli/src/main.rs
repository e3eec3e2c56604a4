fn main() -> std::process::ExitCode {
    pmfs_cli::main_with(std::env::args_os())
}
