use clap::Parser;

fn main() {
    let cli = dscsma_cli::Cli::parse();
    match dscsma_cli::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("dscsma: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
