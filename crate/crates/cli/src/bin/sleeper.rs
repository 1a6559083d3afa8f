use std::io::Write;
use std::time::Duration;

use guiliner_cli::fixture_main::{float_arg, parse_or_exit, text_arg};

fn main() {
    let args = parse_or_exit("sleeper");
    let seconds = float_arg(&args, "seconds", 30.0);
    let marker = text_arg(&args, "marker").unwrap_or_else(|| "ready".to_string());
    println!("{marker}");
    std::io::stdout().flush().expect("flush stdout");
    std::thread::sleep(Duration::from_secs_f64(seconds));
}
