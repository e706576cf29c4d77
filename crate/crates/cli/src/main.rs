use clap::Parser;

fn main() {
    let args = fudge_cli::Args::parse();
    if let Err(e) = fudge_cli::run(&args) {
        eprintln!("fudge: {e}");
        std::process::exit(e.exit_code());
    }
}
