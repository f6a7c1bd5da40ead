use clap::Parser;
use stratreg_cli::{dispatch, Cli};

fn main() {
    // die quietly when stdout's reader goes away (e.g. piping into `head`)
    // instead of panicking mid-print
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
