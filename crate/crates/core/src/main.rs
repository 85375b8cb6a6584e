use clap::Parser;
use dcgrid::cli::{execute, Cli};
use dcgrid::config::ExitCode;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Io } else { ExitCode::Success };
            let _ = e.print();
            std::process::exit(code as i32);
        }
    };
    std::process::exit(execute(cli) as i32);
}
