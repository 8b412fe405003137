use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "help") {
        print!("{}", wsob::config::HELP_TEXT);
        return ExitCode::SUCCESS;
    }
    if args.is_empty() {
        eprint!("{}", wsob::config::HELP_TEXT);
        return ExitCode::from(2);
    }
    let env_out = std::env::var("WSOB_OUT_DIR").ok();
    match wsob::cli::run(&args, env_out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
