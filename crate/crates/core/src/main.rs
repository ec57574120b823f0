use std::process::ExitCode;

use renewal_transport::cli::{dispatch, exit_status, parse_config};
use renewal_transport::Error;

fn main() -> ExitCode {
    let tokens: Vec<String> = std::env::args().skip(1).collect();
    let result = parse_config(&tokens, None).and_then(|cfg| dispatch(&cfg));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.status as u8)
        }
        Err(Error::Usage(msg)) if msg.contains("Usage:") || msg.starts_with("renewal-transport") => {
            // clap's rendered help, version or error text
            print!("{msg}");
            let code = if msg.contains("error:") { 2 } else { 0 };
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e) as u8)
        }
    }
}
