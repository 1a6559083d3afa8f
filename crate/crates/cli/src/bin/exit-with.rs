use guiliner_cli::fixture_main::{int_arg, parse_or_exit, text_arg};

fn main() {
    let args = parse_or_exit("exit-with");
    let code = int_arg(&args, "code", 0) as i32;
    if let Some(message) = text_arg(&args, "message") {
        println!("{message}");
    }
    if code != 0 {
        eprintln!("exit-with: exiting with status {code}");
    }
    std::process::exit(code);
}
