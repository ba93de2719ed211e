use clap::Parser;
use proto_align::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            println!("{}: wrote {} files to {}", cli.command.name(), o.files.len(), o.out_dir.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
