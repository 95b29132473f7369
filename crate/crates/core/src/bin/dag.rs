fn main() {
    std::process::exit(dag_forecast::cli::run(std::env::args_os()));
}
