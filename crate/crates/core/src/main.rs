use clap::Parser;

use catzeno::cli::{exit_code, hint, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => eprintln!("wrote {}", dir.display()),
        Err(e) => {
            eprintln!("error: {e}\nhint: {}", hint(&e));
            std::process::exit(exit_code(&e));
        }
    }
}
