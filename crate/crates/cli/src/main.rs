use clap::Parser;
use vrpod_cli::{configure_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(cli, &mut std::io::stdout().lock()));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
