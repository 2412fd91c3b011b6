use clap::Parser;

use sdfloc::cli::{execute, threads_from_env, Cli};

fn main() {
    let cli = Cli::parse();
    let threads = match threads_from_env() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            std::process::exit(3);
        }
    };
    let code = pool.install(|| execute(cli));
    std::process::exit(code);
}
