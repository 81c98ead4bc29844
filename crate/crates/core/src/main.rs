fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    let code = spine_escape::cli::run(std::env::args_os(), &mut stdout.lock());
    std::process::exit(code);
}
