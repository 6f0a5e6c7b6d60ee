use std::process::ExitCode;

fn main() -> ExitCode {
    match finid_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(e) = err.downcast_ref::<clap::Error>() {
                // Help and version requests are not failures.
                if !e.use_stderr() {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
            }
            eprintln!("{}", finid_cli::error_record(&err));
            ExitCode::FAILURE
        }
    }
}
