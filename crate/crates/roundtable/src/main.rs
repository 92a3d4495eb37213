fn main() -> std::process::ExitCode {
    roundtable::cli::main_with_args(std::env::args_os())
}
