use clap::Parser;

fn main() {
    let cli = ghzcert_cli::Cli::parse();
    match ghzcert_cli::run(&cli) {
        Ok(out) => print!("{out}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
