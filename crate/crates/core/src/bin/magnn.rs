fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MAGNN_LOG", "warn")).init();
    std::process::exit(magnn::cli::run(std::env::args_os()));
}
