//! Argument specs of the small programs the test suite drives. Each one has a
//! hand-written XML twin under `fixtures/` that must parse to the same spec.

use crate::argdoc::ArgSpec;
use crate::model::{OptionDef, OptionGroup, OptionKind, OptionValue, Range, RenderStyle};

pub const NAMES: [&str; 6] = [
    "argv-echo",
    "stderr-emitter",
    "exit-with",
    "seeded-output",
    "write-file",
    "sleeper",
];

const DATE: &str = "2024-01-01";

pub fn by_name(name: &str) -> Option<ArgSpec> {
    match name {
        "argv-echo" => Some(argv_echo()),
        "stderr-emitter" => Some(stderr_emitter()),
        "exit-with" => Some(exit_with()),
        "seeded-output" => Some(seeded_output()),
        "write-file" => Some(write_file()),
        "sleeper" => Some(sleeper()),
        _ => None,
    }
}

/// Covers every option kind and render style.
pub fn argv_echo() -> ArgSpec {
    ArgSpec::new("argv-echo", "1.0")
        .summary("print each argument on its own line")
        .description("Prints every command-line argument it receives, one per line, exactly as received.")
        .date(DATE)
        .group(
            OptionGroup::new("Parameters", "Numeric model parameters.")
                .option(
                    OptionDef::new("t", OptionKind::Float)
                        .flag("-t")
                        .label("Theta")
                        .doc("Scaled mutation rate of the simulated population.")
                        .required(true)
                        .default_value(OptionValue::Float(1.0))
                        .range(Range::Float { min: 0.0, max: 100.0 }),
                )
                .option(
                    OptionDef::new("seed", OptionKind::Int)
                        .flag("--seed")
                        .label("Random seed")
                        .doc("Seed for the pseudo-random number generator.")
                        .range(Range::Int { min: 0, max: 4_294_967_295 }),
                )
                .option(
                    OptionDef::new("model", OptionKind::Choice)
                        .flag("--model")
                        .style(RenderStyle::EqualsJoined)
                        .label("Substitution model")
                        .doc("Nucleotide substitution model.")
                        .choice("hky", "HKY85")
                        .choice("jc", "Jukes-Cantor")
                        .choice("f81", "Felsenstein 1981")
                        .default_value(OptionValue::Choice("hky".into())),
                ),
        )
        .group(
            OptionGroup::new("Input and output", "Files read and written.")
                .option(
                    OptionDef::new("input", OptionKind::InFile)
                        .label("Input file")
                        .doc("Data file to read."),
                )
                .option(
                    OptionDef::new("output", OptionKind::OutFile)
                        .flag("-o")
                        .label("Output file")
                        .doc("Where results are written."),
                )
                .option(
                    OptionDef::new("include", OptionKind::Dir)
                        .flag("-I")
                        .repeatable(true)
                        .label("Include directory")
                        .doc("Directory searched for auxiliary files."),
                ),
        )
        .group(
            OptionGroup::new("Miscellaneous", "")
                .option(
                    OptionDef::new("name", OptionKind::String)
                        .flag("--name")
                        .label("Run name")
                        .doc("Free-text name recorded with the run."),
                )
                .option(
                    OptionDef::new("verbose", OptionKind::Flag)
                        .flag("-v")
                        .label("Verbose output")
                        .doc("Print progress messages."),
                ),
        )
}

pub fn stderr_emitter() -> ArgSpec {
    ArgSpec::new("stderr-emitter", "1.0")
        .summary("write tagged lines to standard error")
        .description("Writes numbered lines to standard error, and optionally matching lines to standard output.")
        .date(DATE)
        .group(
            OptionGroup::new("Output", "")
                .option(
                    OptionDef::new("lines", OptionKind::Int)
                        .flag("--lines")
                        .label("Line count")
                        .doc("Number of lines written to each stream.")
                        .default_value(OptionValue::Int(3))
                        .range(Range::Int { min: 0, max: 100_000 }),
                )
                .option(
                    OptionDef::new("also-stdout", OptionKind::Flag)
                        .flag("--also-stdout")
                        .label("Also write to standard output"),
                ),
        )
}

pub fn exit_with() -> ArgSpec {
    ArgSpec::new("exit-with", "1.0")
        .summary("exit with a chosen status code")
        .description("Exits with the given status. A non-zero status is also reported on standard error.")
        .date(DATE)
        .group(
            OptionGroup::new("Exit", "")
                .option(
                    OptionDef::new("code", OptionKind::Int)
                        .flag("--code")
                        .label("Exit code")
                        .required(true)
                        .range(Range::Int { min: 0, max: 255 }),
                )
                .option(
                    OptionDef::new("message", OptionKind::String)
                        .flag("--message")
                        .label("Message printed to standard output"),
                ),
        )
}

pub fn seeded_output() -> ArgSpec {
    ArgSpec::new("seeded-output", "1.0")
        .summary("write a deterministic byte stream")
        .description("Writes a pseudo-random byte stream determined by the seed, or its SHA-256 digest.")
        .date(DATE)
        .group(
            OptionGroup::new("Stream", "")
                .option(
                    OptionDef::new("bytes", OptionKind::Int)
                        .flag("--bytes")
                        .label("Byte count")
                        .required(true)
                        .range(Range::Int { min: 0, max: 1 << 34 }),
                )
                .option(
                    OptionDef::new("seed", OptionKind::Int)
                        .flag("--seed")
                        .label("Seed")
                        .default_value(OptionValue::Int(1)),
                )
                .option(
                    OptionDef::new("digest", OptionKind::Flag)
                        .flag("--digest")
                        .label("Print the SHA-256 digest instead of the stream"),
                ),
        )
}

pub fn write_file() -> ArgSpec {
    ArgSpec::new("write-file", "1.0")
        .summary("write text to a file")
        .description("Writes the given text to the output file and prints the path it wrote.")
        .date(DATE)
        .group(
            OptionGroup::new("File", "")
                .option(
                    OptionDef::new("out", OptionKind::OutFile)
                        .flag("--out")
                        .label("Output file")
                        .required(true),
                )
                .option(
                    OptionDef::new("text", OptionKind::String)
                        .flag("--text")
                        .label("Text to write")
                        .default_value(OptionValue::Text("hello".into())),
                ),
        )
}

pub fn sleeper() -> ArgSpec {
    ArgSpec::new("sleeper", "1.0")
        .summary("print a marker, then sleep")
        .description("Prints the marker line, flushes it, then sleeps for the given number of seconds.")
        .date(DATE)
        .group(
            OptionGroup::new("Timing", "")
                .option(
                    OptionDef::new("seconds", OptionKind::Float)
                        .flag("--seconds")
                        .label("Sleep time in seconds")
                        .default_value(OptionValue::Float(30.0))
                        .range(Range::Float { min: 0.0, max: 86_400.0 }),
                )
                .option(
                    OptionDef::new("marker", OptionKind::String)
                        .flag("--marker")
                        .label("Marker line")
                        .default_value(OptionValue::Text("ready".into())),
                ),
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixture_specs_are_valid() {
        for name in NAMES {
            let spec = by_name(name).unwrap();
            assert_eq!(spec.name, name);
            assert!(spec.violations().is_empty(), "{name}: {:?}", spec.violations());
        }
    }

    #[test]
    fn argv_echo_covers_every_kind_and_style() {
        let spec = argv_echo();
        for kind in OptionKind::ALL {
            assert!(spec.options().any(|d| d.kind == kind), "{kind:?}");
        }
        for style in RenderStyle::ALL {
            assert!(spec.options().any(|d| d.style == style), "{style:?}");
        }
    }
}
