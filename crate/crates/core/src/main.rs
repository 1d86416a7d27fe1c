use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("ATRELLIS_LOG", "warn")).init();
    std::process::exit(atrellis::cli::run(std::env::args_os()));
}
