//! Prints each argument on its own line, exactly as received.

use std::io::Write;

fn main() {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for arg in std::env::args_os().skip(1) {
        out.write_all(arg.as_encoded_bytes()).unwrap();
        out.write_all(b"\n").unwrap();
    }
}
