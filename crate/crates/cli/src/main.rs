use clap::Parser;

fn main() {
    let cli = lanecraft_cli::Cli::parse();
    match lanecraft_cli::run(cli) {
        Ok(message) => {
            if !message.is_empty() {
                println!("{message}");
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
