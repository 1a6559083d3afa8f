//! Headless front end: validate, preview, run, export, emit and serve.
//!
//! Exit codes: 2 for usage errors (including `--set` naming an unknown
//! option), 1 for validation and run-setup failures, and the child's own
//! status for `run`.

pub mod fixture_main;

use std::ffi::OsString;
use std::io::{self, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use guiliner_core::argdoc::emit;
use guiliner_core::fixtures;
use guiliner_core::model::{ModelError, SessionState};
use guiliner_core::runner::{launch, OutputChunk, OutputSink, RunOptions, RunStatus, Stream};
use guiliner_core::xml::{attach_values, serialize_spec, validate_document, SpecDocument};
use guiliner_core::EmitFormat;
use guiliner_service::{load_spec, preview_of, AppState, StartupError};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "guiliner", version, about = "Host a command-line program described by an XML option spec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a spec document and print every problem found.
    Validate {
        spec: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the command line the current settings assemble to.
    Preview {
        #[command(flatten)]
        session: SessionArgs,
        /// Print the preview as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the hosted program, forwarding its output.
    Run {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Write the spec with the current settings saved into it.
    Export {
        #[command(flatten)]
        session: SessionArgs,
        /// Output file; standard output when omitted.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Print a fixture program's documentation in one of the output formats.
    Emit {
        /// Fixture program name.
        fixture: String,
        /// short-help, long-help, man or guiliner-xml.
        #[arg(long, value_parser = parse_format)]
        format: EmitFormat,
    },
    /// Serve the HTTP API for one spec.
    Serve {
        spec: PathBuf,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
        /// Working directory for runs; the current directory by default.
        #[arg(long)]
        cwd: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    pub spec: PathBuf,
    /// Option value as `id=raw`. Repeat for more options or for repeatable ones.
    #[arg(long = "set", value_name = "ID=RAW", value_parser = parse_binding)]
    pub set: Vec<(String, String)>,
    /// Working directory for the run; the current directory by default.
    #[arg(long)]
    pub cwd: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<EmitFormat, String> {
    s.parse()
}

fn parse_binding(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((id, raw)) if !id.is_empty() => Ok((id.to_string(), raw.to_string())),
        _ => Err(format!("expected ID=RAW, got `{s}`")),
    }
}

/// A command failure: message for stderr plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn failed(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl From<StartupError> for Failure {
    fn from(e: StartupError) -> Self {
        Failure::failed(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("guiliner: {}", f.message.trim_end());
            f.code
        }
    }
}

pub fn run_command(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Validate { spec, json } => validate(&spec, json),
        Command::Preview { session, json } => {
            let (_, state) = open_session(&session)?;
            let preview = preview_of(&state);
            let mut out = io::stdout().lock();
            if json {
                serde_json::to_writer_pretty(&mut out, &preview).map_err(|e| Failure::failed(e.to_string()))?;
                writeln!(out).ok();
            } else {
                writeln!(out, "{}", preview.text).ok();
            }
            Ok(0)
        }
        Command::Run { session } => {
            let (_, state) = open_session(&session)?;
            run(&state)
        }
        Command::Export { session, output } => {
            let (doc, state) = open_session(&session)?;
            let doc = attach_values(&doc, &state).map_err(|e| Failure::failed(e.to_string()))?;
            let bytes = serialize_spec(&doc);
            match output {
                Some(path) => std::fs::write(&path, bytes)
                    .map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?,
                None => io::stdout().write_all(&bytes).map_err(|e| Failure::failed(e.to_string()))?,
            }
            Ok(0)
        }
        Command::Emit { fixture, format } => {
            let spec = fixtures::by_name(&fixture).ok_or_else(|| {
                Failure::usage(format!(
                    "unknown fixture `{fixture}`; known: {}",
                    fixtures::NAMES.join(", ")
                ))
            })?;
            io::stdout()
                .write_all(&emit(&spec, format))
                .map_err(|e| Failure::failed(e.to_string()))?;
            Ok(0)
        }
        Command::Serve { spec, port, host, cwd } => serve(&spec, SocketAddr::new(host, port), cwd),
    }
}

fn validate(path: &Path, json: bool) -> Result<i32, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
    let report = validate_document(&bytes);
    if json {
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Failure::failed(e.to_string()))?;
        writeln!(out).ok();
    } else if report.errors.is_empty() && report.warnings.is_empty() {
        println!("{}: ok", path.display());
    } else {
        print!("{report}");
        if !report.to_string().ends_with('\n') {
            println!();
        }
    }
    Ok(if report.is_valid() { 0 } else { EXIT_FAILURE })
}

fn working_dir(cwd: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let base = std::env::current_dir().map_err(|e| Failure::failed(format!("current directory: {e}")))?;
    Ok(match cwd {
        Some(dir) => base.join(dir),
        None => base,
    })
}

/// Loads the spec, applies its saved values, then the `--set` bindings.
pub fn open_session(args: &SessionArgs) -> Result<(SpecDocument, SessionState), Failure> {
    let doc = load_spec(&args.spec)?;
    let cwd = working_dir(&args.cwd)?;
    let mut session = doc
        .session(cwd)
        .map_err(|e| Failure::failed(format!("saved values: {e}")))?;
    for (id, raw) in &args.set {
        session = session.set_option(id, raw).map_err(|e| match e {
            ModelError::UnknownOption(_) => Failure::usage(format!("--set {id}: {e}")),
            other => Failure::failed(format!("--set {id}: {other}")),
        })?;
    }
    Ok((doc, session))
}

/// Forwards child output to our own streams as it arrives.
struct Forward;

impl OutputSink for Forward {
    fn chunk(&self, _run_id: &str, chunk: &OutputChunk) {
        let _ = match chunk.stream {
            Stream::Stdout => {
                let mut out = io::stdout().lock();
                out.write_all(&chunk.bytes).and_then(|_| out.flush())
            }
            Stream::Stderr => {
                let mut err = io::stderr().lock();
                err.write_all(&chunk.bytes).and_then(|_| err.flush())
            }
        };
    }
}

fn run(session: &SessionState) -> Result<i32, Failure> {
    let (_, handle) =
        launch(session, Arc::new(Forward), &RunOptions::default()).map_err(|e| Failure::failed(e.to_string()))?;
    let record = handle.await_run();
    match record.status {
        RunStatus::Exited { code } => Ok(code),
        RunStatus::Killed => Err(Failure::failed("run was killed")),
        RunStatus::Failed { reason } => Err(Failure::failed(format!("run failed: {reason}"))),
        RunStatus::Running => unreachable!("await_run returns a terminal record"),
    }
}

fn serve(spec: &Path, addr: SocketAddr, cwd: Option<PathBuf>) -> Result<i32, Failure> {
    let doc = load_spec(spec)?;
    let state = AppState::new(doc, working_dir(&cwd)?, RunOptions::default())?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::failed(e.to_string()))?;
    runtime.block_on(async move {
        let (local, server) = guiliner_service::bind(state, addr)
            .await
            .map_err(|e| Failure::failed(format!("bind {addr}: {e}")))?;
        println!("listening on http://{local}");
        io::stdout().flush().ok();
        server.await.map_err(|e| Failure::failed(e.to_string()))?;
        Ok(0)
    })
}
