use guiliner_cli::fixture_main::{parse_or_exit, text_arg};

fn main() {
    let args = parse_or_exit("write-file");
    let out = text_arg(&args, "out").expect("required by spec");
    let text = text_arg(&args, "text").unwrap_or_else(|| "hello".to_string());
    if let Err(e) = std::fs::write(&out, text.as_bytes()) {
        eprintln!("write-file: {out}: {e}");
        std::process::exit(1);
    }
    let cwd = std::env::current_dir().expect("current directory");
    println!("{}", cwd.join(&out).display());
}
