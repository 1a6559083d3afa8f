//! Executes a hosted program and captures its output.
//!
//! The child is spawned directly from the argv vector, never through a shell.
//! Each output stream has its own pump thread that reads 4 KiB chunks, appends
//! them to the run record and forwards them to an [`OutputSink`]. A waiter
//! thread reaps the child, drains both pumps and only then publishes the
//! terminal status, so the final status always follows the last chunk.

use std::ffi::{OsStr, OsString};
use std::fs;
use std::io::{self, Read};
use std::os::unix::fs::PermissionsExt;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{assemble, AssembleError, AssembledCommand};
use crate::model::{OptionKind, OptionValue, SessionState};

const CHUNK_SIZE: usize = 4096;
pub const DEFAULT_KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("executable not found: {0}")]
    ExecutableNotFound(String),
    #[error("input file for `{id}` does not exist: {path}")]
    InputFileMissing { id: String, path: String },
    #[error("parent directory for `{id}` does not exist: {path}")]
    OutputDirMissing { id: String, path: String },
    #[error("working directory does not exist: {0}")]
    WorkingDirMissing(String),
    #[error("failed to start process: {0}")]
    SpawnFailed(String),
    #[error("run {0} is already active")]
    RunAlreadyActive(String),
    #[error("required options not set: {}", .0.join(", "))]
    MissingRequired(Vec<String>),
    #[error("run has already terminated")]
    AlreadyTerminated,
    #[error("run is still in progress")]
    StillRunning,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<AssembleError> for RunError {
    fn from(e: AssembleError) -> Self {
        match e {
            AssembleError::MissingRequired(ids) => RunError::MissingRequired(ids),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Stdout,
    Stderr,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Stdout => "stdout",
            Stream::Stderr => "stderr",
        }
    }
}

impl std::str::FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stdout" => Ok(Stream::Stdout),
            "stderr" => Ok(Stream::Stderr),
            other => Err(format!("unknown stream `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputChunk {
    pub stream: Stream,
    /// Starts at 0 and increases by one per chunk, per stream.
    pub seq: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Exited { code: i32 },
    Failed { reason: String },
    Killed,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, RunStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub command: AssembledCommand,
    pub started_at: SystemTime,
    pub ended_at: Option<SystemTime>,
    pub status: RunStatus,
    /// Stdout chunks in arrival order.
    pub console_transcript: Vec<OutputChunk>,
    /// Stderr chunks in arrival order.
    pub error_transcript: Vec<OutputChunk>,
}

impl RunRecord {
    pub fn transcript(&self, stream: Stream) -> &[OutputChunk] {
        match stream {
            Stream::Stdout => &self.console_transcript,
            Stream::Stderr => &self.error_transcript,
        }
    }

    /// Concatenated bytes of one stream.
    pub fn bytes(&self, stream: Stream) -> Vec<u8> {
        self.transcript(stream)
            .iter()
            .flat_map(|c| c.bytes.iter().copied())
            .collect()
    }

    /// Whether the status bar should flag an error: a non-zero exit, a
    /// failure, or anything written to stderr.
    pub fn error_notice(&self) -> bool {
        matches!(self.status, RunStatus::Exited { code } if code != 0)
            || matches!(self.status, RunStatus::Failed { .. })
            || self.error_transcript.iter().any(|c| !c.bytes.is_empty())
    }
}

/// Receives output as it is produced. Chunk callbacks arrive on the pump
/// threads, one thread per stream; `finished` arrives once, after every chunk.
pub trait OutputSink: Send + Sync {
    fn chunk(&self, run_id: &str, chunk: &OutputChunk);

    fn finished(&self, _record: &RunRecord) {}
}

/// Sink that discards everything; the record still keeps the transcripts.
pub struct NullSink;

impl OutputSink for NullSink {
    fn chunk(&self, _run_id: &str, _chunk: &OutputChunk) {}
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directories searched for a bare executable name. `None` uses `$PATH`.
    pub search_path: Option<OsString>,
    /// Time between SIGTERM and SIGKILL when killing a run.
    pub kill_grace: Duration,
    /// Start the child in its own process group so a kill reaches its
    /// descendants too.
    pub own_process_group: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            search_path: None,
            kill_grace: DEFAULT_KILL_GRACE,
            own_process_group: true,
        }
    }
}

struct Inner {
    record: RunRecord,
    settled: bool,
}

struct Shared {
    inner: Mutex<Inner>,
    settled: Condvar,
    pid: i32,
    own_group: bool,
    kill_requested: AtomicBool,
    kill_grace: Duration,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Handle to a started run. Cloning shares the same run.
#[derive(Clone)]
pub struct RunHandle {
    shared: Arc<Shared>,
}

impl std::fmt::Debug for RunHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunHandle")
            .field("run_id", &self.run_id())
            .field("pid", &self.shared.pid)
            .finish()
    }
}

impl RunHandle {
    pub fn run_id(&self) -> String {
        self.shared.lock().record.run_id.clone()
    }

    pub fn pid(&self) -> u32 {
        self.shared.pid as u32
    }

    /// Snapshot of the record as it stands.
    pub fn record(&self) -> RunRecord {
        self.shared.lock().record.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.shared.lock().settled
    }

    /// Blocks until the child has exited and both streams are drained.
    pub fn await_run(&self) -> RunRecord {
        let mut inner = self.shared.lock();
        while !inner.settled {
            inner = self.shared.settled.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
        inner.record.clone()
    }

    /// Like [`await_run`](Self::await_run) but gives up after `timeout`.
    pub fn await_timeout(&self, timeout: Duration) -> Option<RunRecord> {
        let deadline = Instant::now() + timeout;
        let mut inner = self.shared.lock();
        while !inner.settled {
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            inner = self
                .shared
                .settled
                .wait_timeout(inner, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        Some(inner.record.clone())
    }

    /// Terminates the run: SIGTERM, then SIGKILL once the grace period
    /// passes. Output produced before the kill stays in the transcript.
    pub fn kill(&self) -> Result<RunRecord, RunError> {
        {
            let inner = self.shared.lock();
            if inner.record.status.is_terminal() {
                return Err(RunError::AlreadyTerminated);
            }
            self.shared.kill_requested.store(true, Ordering::SeqCst);
            self.signal(libc::SIGTERM);
        }
        if let Some(record) = self.await_timeout(self.shared.kill_grace) {
            return Ok(record);
        }
        self.signal(libc::SIGKILL);
        Ok(self.await_run())
    }

    fn signal(&self, sig: libc::c_int) {
        let target = if self.shared.own_group {
            -self.shared.pid
        } else {
            self.shared.pid
        };
        // SAFETY: kill(2) has no memory-safety preconditions.
        unsafe {
            libc::kill(target, sig);
        }
    }
}

fn next_run_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    format!("run-{:x}-{}-{n}", nanos, std::process::id())
}

fn is_executable(path: &Path) -> bool {
    fs::metadata(path)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

/// Resolves the program the same way a shell would: names containing `/` are
/// paths (relative ones against `cwd`), bare names are looked up on the
/// search path.
pub fn resolve_executable(exe: &str, cwd: &Path, search_path: Option<&OsStr>) -> Option<PathBuf> {
    if exe.is_empty() {
        return None;
    }
    if exe.contains('/') {
        let p = Path::new(exe);
        let full = if p.is_absolute() { p.to_path_buf() } else { cwd.join(p) };
        return is_executable(&full).then_some(full);
    }
    let path_var = match search_path {
        Some(p) => p.to_os_string(),
        None => std::env::var_os("PATH")?,
    };
    std::env::split_paths(&path_var)
        .map(|dir| {
            let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
            let dir = if dir.is_absolute() { dir } else { cwd.join(dir) };
            dir.join(exe)
        })
        .find(|candidate| is_executable(candidate))
}

/// Run-time existence checks for path-valued options, resolved against the
/// session's working directory: input files must exist, output files and
/// directories need an existing parent.
pub fn check_paths(session: &SessionState) -> Result<(), RunError> {
    let cwd = session.working_dir();
    for def in session.spec().options().filter(|d| d.kind.is_path()) {
        let Some(value) = session.state(&def.id).and_then(|s| s.value()) else {
            continue;
        };
        for v in value.values() {
            let OptionValue::Path(raw) = v else { continue };
            let full = cwd.join(raw);
            match def.kind {
                OptionKind::InFile => {
                    if !full.exists() {
                        return Err(RunError::InputFileMissing {
                            id: def.id.clone(),
                            path: raw.clone(),
                        });
                    }
                }
                _ => {
                    let parent = match full.parent() {
                        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                        Some(_) => cwd.to_path_buf(),
                        None => continue,
                    };
                    if !parent.is_dir() {
                        return Err(RunError::OutputDirMissing {
                            id: def.id.clone(),
                            path: raw.clone(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Spawns `command` and starts pumping its output into `sink`.
pub fn start_run(
    command: &AssembledCommand,
    sink: Arc<dyn OutputSink>,
    opts: &RunOptions,
) -> Result<RunHandle, RunError> {
    let exe = command
        .argv
        .first()
        .ok_or_else(|| RunError::ExecutableNotFound(String::new()))?;
    if !command.cwd.is_dir() {
        return Err(RunError::WorkingDirMissing(command.cwd.display().to_string()));
    }
    let resolved = resolve_executable(exe, &command.cwd, opts.search_path.as_deref())
        .ok_or_else(|| RunError::ExecutableNotFound(exe.clone()))?;

    let mut cmd = Command::new(&resolved);
    cmd.arg0(exe)
        .args(&command.argv[1..])
        .current_dir(&command.cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if opts.own_process_group {
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RunError::ExecutableNotFound(exe.clone()),
        _ => RunError::SpawnFailed(e.to_string()),
    })?;

    let record = RunRecord {
        run_id: next_run_id(),
        command: command.clone(),
        started_at: SystemTime::now(),
        ended_at: None,
        status: RunStatus::Running,
        console_transcript: Vec::new(),
        error_transcript: Vec::new(),
    };
    let shared = Arc::new(Shared {
        inner: Mutex::new(Inner {
            record,
            settled: false,
        }),
        settled: Condvar::new(),
        pid: child.id() as i32,
        own_group: opts.own_process_group,
        kill_requested: AtomicBool::new(false),
        kill_grace: opts.kill_grace,
    });

    let stdout = child.stdout.take().expect("stdout is piped");
    let stderr = child.stderr.take().expect("stderr is piped");
    let pumps = vec![
        spawn_pump(stdout, Stream::Stdout, shared.clone(), sink.clone()),
        spawn_pump(stderr, Stream::Stderr, shared.clone(), sink.clone()),
    ];
    let waiter_shared = shared.clone();
    thread::Builder::new()
        .name("run-waiter".into())
        .spawn(move || wait_for_exit(child, pumps, waiter_shared, sink))
        .map_err(|e| RunError::SpawnFailed(e.to_string()))?;

    Ok(RunHandle { shared })
}

fn spawn_pump<R: Read + Send + 'static>(
    mut reader: R,
    stream: Stream,
    shared: Arc<Shared>,
    sink: Arc<dyn OutputSink>,
) -> JoinHandle<()> {
    thread::Builder::new()
        .name(format!("run-{}", stream.as_str()))
        .spawn(move || {
            let mut buf = vec![0u8; CHUNK_SIZE];
            let mut seq = 0u64;
            loop {
                let n = match reader.read(&mut buf) {
                    Ok(0) => break,
                    Ok(n) => n,
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(_) => break,
                };
                let chunk = OutputChunk {
                    stream,
                    seq,
                    bytes: buf[..n].to_vec(),
                };
                seq += 1;
                let run_id = {
                    let mut inner = shared.lock();
                    let record = &mut inner.record;
                    match stream {
                        Stream::Stdout => record.console_transcript.push(chunk.clone()),
                        Stream::Stderr => record.error_transcript.push(chunk.clone()),
                    }
                    record.run_id.clone()
                };
                sink.chunk(&run_id, &chunk);
            }
        })
        .expect("spawn pump thread")
}

fn wait_for_exit(mut child: Child, pumps: Vec<JoinHandle<()>>, shared: Arc<Shared>, sink: Arc<dyn OutputSink>) {
    let waited = child.wait();
    for p in pumps {
        let _ = p.join();
    }
    let snapshot = {
        let mut inner = shared.lock();
        inner.record.status = final_status(waited, shared.kill_requested.load(Ordering::SeqCst));
        inner.record.ended_at = Some(SystemTime::now());
        inner.record.clone()
    };
    sink.finished(&snapshot);
    shared.lock().settled = true;
    shared.settled.notify_all();
}

fn final_status(waited: io::Result<ExitStatus>, killed: bool) -> RunStatus {
    match waited {
        _ if killed => RunStatus::Killed,
        Ok(status) => match (status.code(), status.signal()) {
            (Some(code), _) => RunStatus::Exited { code },
            (None, Some(sig)) => RunStatus::Failed {
                reason: format!("terminated by signal {sig}"),
            },
            (None, None) => RunStatus::Failed {
                reason: "unknown exit status".to_string(),
            },
        },
        Err(e) => RunStatus::Failed {
            reason: format!("wait failed: {e}"),
        },
    }
}

/// Assembles, checks and starts a run for `session`, returning the session
/// with the run marked active.
pub fn launch(
    session: &SessionState,
    sink: Arc<dyn OutputSink>,
    opts: &RunOptions,
) -> Result<(SessionState, RunHandle), RunError> {
    if let Some(active) = session.active_run() {
        return Err(RunError::RunAlreadyActive(active.to_string()));
    }
    let command = assemble(session)?;
    check_paths(session)?;
    let handle = start_run(&command, sink, opts)?;
    let next = session.begin_run(handle.run_id());
    Ok((next, handle))
}

/// Writes the raw bytes of one stream to `dest`; returns the byte count.
pub fn save_transcript(record: &RunRecord, stream: Stream, dest: &Path) -> Result<u64, RunError> {
    if !record.status.is_terminal() {
        return Err(RunError::StillRunning);
    }
    let bytes = record.bytes(stream);
    fs::write(dest, &bytes).map_err(|e| RunError::Io(format!("{}: {e}", dest.display())))?;
    Ok(bytes.len() as u64)
}
