use clap::Parser;

use blackout_lens::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BLACKOUT_LENS_LOG", "warn")).init();
    std::process::exit(run(Cli::parse()));
}
