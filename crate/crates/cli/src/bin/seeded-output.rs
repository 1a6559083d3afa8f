use std::io::Write;

use guiliner_cli::fixture_main::{flag_arg, int_arg, parse_or_exit, seeded_stream};
use sha2::{Digest, Sha256};

fn main() {
    let args = parse_or_exit("seeded-output");
    let bytes = int_arg(&args, "bytes", 0) as u64;
    let seed = int_arg(&args, "seed", 1) as u64;
    if flag_arg(&args, "digest") {
        let mut hasher = Sha256::new();
        seeded_stream(seed, bytes, |b| hasher.update(b));
        let hex: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        println!("{hex}");
        return;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    seeded_stream(seed, bytes, |b| out.write_all(b).expect("write stdout"));
}
