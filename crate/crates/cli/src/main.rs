use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use maxmin_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, out) = match run(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(dir) = out {
        let written = std::fs::create_dir_all(&dir)
            .and_then(|_| outcome.files.iter().try_for_each(|(name, body)| std::fs::write(dir.join(name), body)));
        if let Err(e) = written {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    let _ = std::io::stdout().flush();
    ExitCode::from(outcome.exit as u8)
}
