use std::process::ExitCode;

fn main() -> ExitCode {
    match ese_cli::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ese_cli::exit_code_for(&e))
        }
    }
}
