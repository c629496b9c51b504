use clap::Parser;

use gossip_harness::args::{Cli, Command};
use gossip_harness::exec;

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let outcome = match &cli.command {
        Command::Topo(args) => exec::topo(args, &mut stdout),
        Command::RunSync(args) => exec::run_sync_cmd(args, &mut stdout),
        Command::RunAsync(args) => exec::run_async_cmd(args, &mut stdout),
        Command::RunSynced(args) => exec::run_synced_cmd(args, &mut stdout),
        Command::Sweep(args) => exec::sweep(args, &mut stdout),
        Command::Bands(args) => exec::bands(args, &mut stdout),
        Command::Validate(args) => exec::validate(args, &mut stdout),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(1);
        }
    }
}
