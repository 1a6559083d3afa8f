use guiliner_cli::fixture_main::{flag_arg, int_arg, parse_or_exit};

fn main() {
    let args = parse_or_exit("stderr-emitter");
    let lines = int_arg(&args, "lines", 3);
    let also_stdout = flag_arg(&args, "also-stdout");
    for i in 0..lines {
        eprintln!("stderr-emitter: error line {i}");
        if also_stdout {
            println!("stderr-emitter: output line {i}");
        }
    }
}
