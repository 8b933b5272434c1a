use clap::Parser;

fn main() {
    let cli = stwave::cli::Cli::parse();
    match stwave::cli::run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
