use std::panic::{catch_unwind, AssertUnwindSafe};

use clap::Parser;

use segqc_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("segqc: {e}");
            e.exit_code()
        }
        // the panic message is already on stderr
        Err(_) => 5,
    };
    std::process::exit(code);
}
