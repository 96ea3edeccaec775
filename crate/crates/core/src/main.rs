use std::process::ExitCode;

fn main() -> ExitCode {
    let cfg = match pamflow::cli::parse_args(std::env::args_os()) {
        Ok(cfg) => cfg,
        Err(e) => {
            if e.is_help {
                print!("{e}");
            } else {
                eprint!("{e}");
                if !e.message.ends_with('\n') {
                    eprintln!();
                }
            }
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match pamflow::cli::run(&cfg) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
