use dwrseg::Error;

fn main() {
    let cli = dwrseg::cli::parse_args();
    match dwrseg::cli::run(&cli, &mut std::io::stdout()) {
        Ok(()) => {}
        // output piped into a closed reader, e.g. `| head`
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(dwrseg::cli::exit_code(&e));
        }
    }
}
