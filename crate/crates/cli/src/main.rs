use clap::Parser;

fn main() {
    let cli = biogap_cli::Cli::parse();
    match biogap_cli::run(cli) {
        Ok(outcome) => print!("{}", outcome.stdout),
        Err(e) => {
            let kind = match e {
                biogap_cli::CliError::Validation(_) => "error",
                biogap_cli::CliError::Runtime(_) => "runtime error",
            };
            for line in e.to_string().lines() {
                eprintln!("{kind}: {line}");
            }
            std::process::exit(e.exit_code());
        }
    }
}
