use std::process::ExitCode;

fn main() -> ExitCode {
    match attn_steer::cli::run_cli(std::env::args_os()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(attn_steer::Error::Argument(msg)) => {
            eprint!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
