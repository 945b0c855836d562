//! Stand-in program runner speaking the sandbox wire protocol on stdio.

fn main() {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    if let Err(e) = llmsearch::stub::serve(stdin.lock(), stdout.lock()) {
        eprintln!("stub-runner: {e}");
        std::process::exit(1);
    }
}
