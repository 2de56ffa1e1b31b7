use vidqa::cli;
use vidqa::config::process_env;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = cli::run(std::env::args_os(), &process_env(), &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
