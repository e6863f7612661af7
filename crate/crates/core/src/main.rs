fn main() {
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = spillover_iv::cli::main_with_args(
        std::env::args_os(),
        &mut spillover_iv::cli::Io {
            out: &mut out,
            err: &mut err,
        },
    );
    std::process::exit(code);
}
