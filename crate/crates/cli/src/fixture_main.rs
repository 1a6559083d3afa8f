//! Shared entry point for the fixture programs in `src/bin`.

use std::io::Write;

use guiliner_core::argdoc::{emit, help_request, parse_argv, ParsedArgs};
use guiliner_core::fixtures;
use guiliner_core::{EmitFormat, OptionValue};

/// Parses the process arguments against the named fixture spec. Help
/// requests are answered and bad arguments reported, both ending the process.
pub fn parse_or_exit(name: &str) -> ParsedArgs {
    let spec = fixtures::by_name(name).expect("known fixture");
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Some(format) = help_request(&spec, &args) {
        std::io::stdout().write_all(&emit(&spec, format)).expect("write help");
        std::process::exit(0);
    }
    match parse_argv(&spec, &args) {
        Ok(parsed) => parsed,
        Err(e) => {
            eprintln!("{name}: {e}");
            eprint!("{}", String::from_utf8_lossy(&emit(&spec, EmitFormat::ShortHelp)));
            std::process::exit(2);
        }
    }
}

fn single<'a>(parsed: &'a ParsedArgs, id: &str) -> Option<&'a OptionValue> {
    parsed.get(id).and_then(|v| v.values().first())
}

pub fn int_arg(parsed: &ParsedArgs, id: &str, default: i64) -> i64 {
    match single(parsed, id) {
        Some(OptionValue::Int(i)) => *i,
        _ => default,
    }
}

pub fn float_arg(parsed: &ParsedArgs, id: &str, default: f64) -> f64 {
    match single(parsed, id) {
        Some(OptionValue::Float(f)) => *f,
        _ => default,
    }
}

pub fn text_arg(parsed: &ParsedArgs, id: &str) -> Option<String> {
    single(parsed, id).map(OptionValue::render)
}

pub fn flag_arg(parsed: &ParsedArgs, id: &str) -> bool {
    matches!(single(parsed, id), Some(OptionValue::Bool(true)))
}

/// The byte stream `seeded-output` writes for `seed`, in `block`-sized
/// pieces. ChaCha8 keyed from the seed.
pub fn seeded_stream(seed: u64, total: u64, mut sink: impl FnMut(&[u8])) {
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0u8; 64 * 1024];
    let mut left = total;
    while left > 0 {
        let n = left.min(buf.len() as u64) as usize;
        rng.fill_bytes(&mut buf[..n]);
        sink(&buf[..n]);
        left -= n as u64;
    }
}
